//! Synthetic corpora with known dependency DAGs and planted activation
//! structure, written in the same on-disk formats as real corpora.
//!
//! Texts are built so the substring oracle recovers the generator's graph
//! exactly: every value is a fresh 8-character alphanumeric token whose
//! character 4-grams occur nowhere else in the trajectory, and argument keys
//! (`q`, `in_<k>_id`) contain an underscore in every 4-character window.

mod text;
mod typed;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use typed::{typed_corpus, TypedCorpus};

use crate::error::{Error, Result};
use crate::oracle::{DependencyGraph, EdgeListRecord, EdgeSet, OracleKind};
use crate::trajlog::{self, activation_file_name, ActivationStore, Condition, ToolCall, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SignalMode {
    /// Random DAG, activations are pure noise.
    None,
    /// Edges `(k, k + 1)` only; activations are pure noise.
    PositionalOnly,
    /// Calls carry producer/consumer flags; `i -> j` iff producer(i) and
    /// consumer(j). Producers get `+s u`, consumers `+s v`, in every layer.
    PlantedLinear,
    /// As `PlantedLinear` with mutually exclusive roles.
    PlantedDirectional,
    /// As `PlantedLinear` with the signal written to one layer only.
    LayerLocalized { layer: u32 },
    /// Edges chain a random subset of calls; chain members get
    /// `s (u + rank z)` so reachability margins grow with hop count.
    HopGraded,
    /// Trajectory pairs identical except that the donor's call `i` is a
    /// producer and the target's is not, so the pair differs in one edge.
    DonorContrast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_trajectories: usize,
    pub min_calls: usize,
    pub max_calls: usize,
    pub hidden_dim: usize,
    pub layer_ids: Vec<u32>,
    /// Expected fraction of `i < j` pairs that are direct edges.
    pub edge_density: f64,
    pub signal_mode: SignalMode,
    pub signal_strength: f64,
    /// Per-coordinate Gaussian noise in every layer.
    pub noise_sd: f64,
    pub n_tools: usize,
    /// Consecutive trajectories sharing one task id.
    pub trajectories_per_task: usize,
    /// Prefix of trajectory and task ids.
    pub name: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_trajectories: 100,
            min_calls: 3,
            max_calls: 6,
            hidden_dim: 64,
            layer_ids: crate::DEFAULT_LAYERS.to_vec(),
            edge_density: 0.3,
            signal_mode: SignalMode::PlantedLinear,
            signal_strength: 1.0,
            noise_sd: 1.0,
            n_tools: 6,
            trajectories_per_task: 1,
            name: "syn".into(),
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.min_calls < 1 || self.min_calls > self.max_calls {
            return bad(format!("call range {}..={} is empty", self.min_calls, self.max_calls));
        }
        if self.max_calls < 2 {
            return bad("at least 2 calls are needed to place any edge".into());
        }
        if !(0.0..=1.0).contains(&self.edge_density) {
            return bad(format!("edge_density {} outside [0, 1]", self.edge_density));
        }
        if self.hidden_dim < 3 {
            return bad("hidden_dim must be at least 3".into());
        }
        if self.layer_ids.is_empty() || self.layer_ids.windows(2).any(|w| w[0] >= w[1]) {
            return bad("layer_ids must be non-empty and strictly increasing".into());
        }
        if !(self.noise_sd >= 0.0) || !self.signal_strength.is_finite() {
            return bad("noise_sd must be non-negative and signal_strength finite".into());
        }
        if self.n_tools == 0 || self.trajectories_per_task == 0 {
            return bad("n_tools and trajectories_per_task must be positive".into());
        }
        match &self.signal_mode {
            SignalMode::LayerLocalized { layer } if !self.layer_ids.contains(layer) => {
                bad(format!("localized layer {layer} is not among layer_ids"))
            }
            SignalMode::DonorContrast if self.n_trajectories % 2 != 0 || self.max_calls < 2 => {
                bad("donor_contrast needs an even trajectory count".into())
            }
            SignalMode::DonorContrast if self.min_calls < 2 => bad("donor_contrast needs min_calls >= 2".into()),
            _ => Ok(()),
        }
    }
}

/// Unit directions used for planting; pairwise orthogonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directions {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
}

/// A linear separator for direct edges over `[pooled_i; pooled_j]` pooled
/// across all configured layers, exact when noise is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub layer_ids: Vec<u32>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub trajectories: Vec<Trajectory>,
    pub stores: Vec<ActivationStore>,
    pub graphs: Vec<DependencyGraph>,
    pub directions: Directions,
    pub certificate: Option<Certificate>,
}

/// Latent structure of one trajectory.
#[derive(Debug, Clone)]
struct Plan {
    n: usize,
    edges: EdgeSet,
    producer: Vec<bool>,
    consumer: Vec<bool>,
    chain_rank: Vec<Option<usize>>,
    tools: Vec<String>,
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn unit_directions(dim: usize, seed: u64) -> Directions {
    let mut rng = stream(seed, u64::MAX);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < 3 {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let d: f64 = x.iter().zip(b).map(|(p, q)| p * q).sum();
            x.iter_mut().zip(b).for_each(|(p, q)| *p -= d * q);
        }
        let norm = x.iter().map(|p| p * p).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(x.into_iter().map(|p| p / norm).collect());
        }
    }
    let z = basis.pop().expect("three vectors");
    let v = basis.pop().expect("three vectors");
    let u = basis.pop().expect("three vectors");
    Directions { u, v, z }
}

fn flag_edges(producer: &[bool], consumer: &[bool]) -> EdgeSet {
    let n = producer.len();
    let mut edges = EdgeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if producer[i] && consumer[j] {
                edges.insert((i, j));
            }
        }
    }
    edges
}

fn make_plan(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Plan {
    let n = rng.random_range(cfg.min_calls..=cfg.max_calls);
    let q = cfg.edge_density.sqrt();
    let mut producer = vec![false; n];
    let mut consumer = vec![false; n];
    let mut chain_rank = vec![None; n];
    let mut edges = EdgeSet::new();
    match cfg.signal_mode {
        SignalMode::None => {
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < cfg.edge_density {
                        edges.insert((i, j));
                    }
                }
            }
        }
        SignalMode::PositionalOnly => edges = (1..n).map(|k| (k - 1, k)).collect(),
        SignalMode::PlantedLinear | SignalMode::LayerLocalized { .. } | SignalMode::DonorContrast => {
            for k in 0..n {
                producer[k] = rng.random::<f64>() < q;
                consumer[k] = rng.random::<f64>() < q;
            }
            edges = flag_edges(&producer, &consumer);
        }
        SignalMode::PlantedDirectional => {
            let q = q.min(0.5);
            for k in 0..n {
                let r: f64 = rng.random();
                producer[k] = r < q;
                consumer[k] = !producer[k] && r < 2.0 * q;
            }
            edges = flag_edges(&producer, &consumer);
        }
        SignalMode::HopGraded => {
            let mut rank = 0;
            let mut last = None;
            for (k, slot) in chain_rank.iter_mut().enumerate() {
                if rng.random::<f64>() < 0.7 {
                    *slot = Some(rank);
                    rank += 1;
                    if let Some(prev) = last {
                        edges.insert((prev, k));
                    }
                    last = Some(k);
                }
            }
        }
    }
    let tools = (0..n).map(|_| format!("tool_{}", rng.random_range(0..cfg.n_tools))).collect();
    Plan {
        n,
        edges,
        producer,
        consumer,
        chain_rank,
        tools,
    }
}

/// Signal added to call `k` at layer position `lpos`.
fn planted(cfg: &SynthConfig, dirs: &Directions, plan: &Plan, k: usize, layer: u32) -> Option<Vec<f64>> {
    let s = cfg.signal_strength;
    let roles = |dirs: &Directions| -> Option<Vec<f64>> {
        let (p, c) = (plan.producer[k], plan.consumer[k]);
        if !p && !c {
            return None;
        }
        Some(
            (0..dirs.u.len())
                .map(|d| s * (if p { dirs.u[d] } else { 0.0 } + if c { dirs.v[d] } else { 0.0 }))
                .collect(),
        )
    };
    match cfg.signal_mode {
        SignalMode::None | SignalMode::PositionalOnly => None,
        SignalMode::PlantedLinear | SignalMode::PlantedDirectional | SignalMode::DonorContrast => roles(dirs),
        SignalMode::LayerLocalized { layer: at } => {
            if layer == at {
                roles(dirs)
            } else {
                None
            }
        }
        SignalMode::HopGraded => plan.chain_rank[k].map(|r| {
            (0..dirs.u.len())
                .map(|d| s * (dirs.u[d] + r as f64 * dirs.z[d]))
                .collect()
        }),
    }
}

fn boundary_of(k: usize) -> usize {
    2 * k + 1
}

fn noise_values(cfg: &SynthConfig, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let nb = 2 * n + 1;
    let len = nb * cfg.layer_ids.len() * cfg.hidden_dim;
    (0..len)
        .map(|_| cfg.noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn build_store(cfg: &SynthConfig, dirs: &Directions, plan: &Plan, id: &str, noise: &[f64]) -> Result<ActivationStore> {
    let nl = cfg.layer_ids.len();
    let dim = cfg.hidden_dim;
    let mut values = noise.to_vec();
    for k in 0..plan.n {
        for (lpos, &layer) in cfg.layer_ids.iter().enumerate() {
            if let Some(sig) = planted(cfg, dirs, plan, k, layer) {
                let off = (boundary_of(k) * nl + lpos) * dim;
                values[off..off + dim].iter_mut().zip(&sig).for_each(|(x, s)| *x += s);
            }
        }
    }
    ActivationStore::new(id, cfg.layer_ids.clone(), dim, 2 * plan.n + 1, values.into_iter().map(|v| v as f32).collect())
}

fn assemble(id: &str, task: &str, condition: Condition, plan: &Plan, texts: &text::Texts) -> Trajectory {
    let calls = (0..plan.n)
        .map(|k| {
            let mut args = Map::new();
            for (key, val) in &texts.args[k] {
                args.insert(key.clone(), Value::String(val.clone()));
            }
            ToolCall {
                index: k,
                tool_name: plan.tools[k].clone(),
                arguments: args,
                output_text: texts.outputs[k].join(" "),
                boundary_index: boundary_of(k),
            }
        })
        .collect();
    Trajectory {
        trajectory_id: id.to_string(),
        task_id: task.to_string(),
        condition,
        reward: None,
        calls,
    }
}

fn task_id(cfg: &SynthConfig, t: usize) -> String {
    format!("{}-task{:04}", cfg.name, t / cfg.trajectories_per_task)
}

fn certificate(cfg: &SynthConfig, dirs: &Directions) -> Option<Certificate> {
    let planted_layers = match cfg.signal_mode {
        SignalMode::PlantedLinear | SignalMode::PlantedDirectional | SignalMode::DonorContrast => cfg.layer_ids.len(),
        SignalMode::LayerLocalized { .. } => 1,
        _ => return None,
    };
    if cfg.signal_strength == 0.0 {
        return None;
    }
    // Pooling divides the planted signal by the layer count.
    let scale = cfg.layer_ids.len() as f64 / (planted_layers as f64 * cfg.signal_strength);
    let weights = dirs.u.iter().chain(&dirs.v).map(|x| x * scale).collect();
    Some(Certificate {
        layer_ids: cfg.layer_ids.clone(),
        weights,
        bias: -1.5,
    })
}

/// Generate a corpus; identical configs give identical corpora.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let dirs = unit_directions(cfg.hidden_dim, cfg.seed);
    let mut trajectories = Vec::with_capacity(cfg.n_trajectories);
    let mut stores = Vec::with_capacity(cfg.n_trajectories);
    let mut graphs = Vec::with_capacity(cfg.n_trajectories);
    if cfg.signal_mode == SignalMode::DonorContrast {
        for pair in 0..cfg.n_trajectories / 2 {
            for (t, plan, texts, noise) in donor_pair(cfg, pair) {
                let id = format!("{}-{:04}", cfg.name, t);
                stores.push(build_store(cfg, &dirs, &plan, &id, &noise)?);
                trajectories.push(assemble(&id, &task_id(cfg, t), Condition::Clean, &plan, &texts));
                graphs.push(DependencyGraph::new(plan.n, plan.edges)?);
            }
        }
    } else {
        for t in 0..cfg.n_trajectories {
            let (plan, texts, noise) = trajectory_parts(cfg, t, None);
            let id = format!("{}-{:04}", cfg.name, t);
            stores.push(build_store(cfg, &dirs, &plan, &id, &noise)?);
            trajectories.push(assemble(&id, &task_id(cfg, t), Condition::Clean, &plan, &texts));
            graphs.push(DependencyGraph::new(plan.n, plan.edges)?);
        }
    }
    Ok(SynthCorpus {
        config: cfg.clone(),
        certificate: certificate(cfg, &dirs),
        trajectories,
        stores,
        graphs,
        directions: dirs,
    })
}

/// Plan, texts and noise of trajectory `t`, optionally with call `skip`'s
/// outgoing dependencies removed.
fn trajectory_parts(cfg: &SynthConfig, t: usize, skip: Option<usize>) -> (Plan, text::Texts, Vec<f64>) {
    let base = 3 * t as u64;
    let mut plan = make_plan(cfg, &mut stream(cfg.seed, base));
    let noise = noise_values(cfg, plan.n, &mut stream(cfg.seed, base + 1));
    if let Some(m) = skip {
        plan.producer[m] = false;
        plan.edges.retain(|&(i, _)| i != m);
    }
    let mut texts = text::realize(plan.n, &plan.edges, &mut stream(cfg.seed, base + 2));
    if let Some(m) = skip {
        texts.outputs[m] = vec!["{}".to_string()];
    }
    (plan, texts, noise)
}

fn donor_pair(cfg: &SynthConfig, pair: usize) -> [(usize, Plan, text::Texts, Vec<f64>); 2] {
    let base = 3 * pair as u64;
    let mut rng = stream(cfg.seed, base);
    let mut a = make_plan(cfg, &mut rng);
    let n = a.n;
    // Call i produces for exactly one later consumer j in the donor only.
    let i = rng.random_range(0..n - 1);
    let j = rng.random_range(i + 1..n);
    for k in i + 1..n {
        a.consumer[k] = k == j;
    }
    a.producer[i] = true;
    a.tools[0] = format!("open_{pair:04}");
    a.edges = flag_edges(&a.producer, &a.consumer);
    let mut b = a.clone();
    b.producer[i] = false;
    b.edges = flag_edges(&b.producer, &b.consumer);
    let noise = noise_values(cfg, n, &mut stream(cfg.seed, base + 1));
    let ta = text::realize(n, &a.edges, &mut stream(cfg.seed, base + 2));
    let tb = ta.without_edge(i, j);
    [(2 * pair, a, ta, noise.clone()), (2 * pair + 1, b, tb, noise)]
}

/// Counterparts with the tool response at call `n / 2` emptied and the
/// downstream plan adapted: that call's outgoing dependencies disappear and
/// its producer signal is removed. Noise is shared with the clean corpus.
pub fn plan_change(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    if cfg.signal_mode == SignalMode::DonorContrast {
        return Err(Error::Invalid("plan_change does not apply to donor_contrast corpora".into()));
    }
    let dirs = unit_directions(cfg.hidden_dim, cfg.seed);
    let mut out = SynthCorpus {
        config: cfg.clone(),
        trajectories: Vec::new(),
        stores: Vec::new(),
        graphs: Vec::new(),
        certificate: certificate(cfg, &dirs),
        directions: dirs.clone(),
    };
    for t in 0..cfg.n_trajectories {
        let n = make_plan(cfg, &mut stream(cfg.seed, 3 * t as u64)).n;
        let (plan, texts, noise) = trajectory_parts(cfg, t, Some(n / 2));
        let id = format!("{}-{:04}-cf", cfg.name, t);
        out.stores.push(build_store(cfg, &dirs, &plan, &id, &noise)?);
        out.trajectories
            .push(assemble(&id, &task_id(cfg, t), Condition::SkipTool, &plan, &texts));
        out.graphs.push(DependencyGraph::new(plan.n, plan.edges)?);
    }
    Ok(out)
}

/// Write `log.jsonl`, `activations/`, `truth.jsonl`, `synth_config.json`
/// and, when available, `certificate.json` under `dir`.
pub fn write_corpus(dir: &Path, corpus: &SynthCorpus) -> Result<()> {
    let act = dir.join("activations");
    fs::create_dir_all(&act).map_err(|e| Error::io(&act, e))?;
    trajlog::write_log(&dir.join("log.jsonl"), &corpus.trajectories)?;
    for store in &corpus.stores {
        trajlog::write_activations(&act.join(activation_file_name(store.trajectory_id())), store)?;
    }
    let mut truth = String::new();
    for (t, g) in corpus.trajectories.iter().zip(&corpus.graphs) {
        truth.push_str(&serde_json::to_string(&EdgeListRecord::new(t, g, OracleKind::Substring))?);
        truth.push('\n');
    }
    let write = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("truth.jsonl", truth)?;
    write("synth_config.json", serde_json::to_string_pretty(&corpus.config)?)?;
    if let Some(c) = &corpus.certificate {
        write("certificate.json", serde_json::to_string_pretty(c)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
