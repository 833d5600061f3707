//! Acceptance suite: one PASS/FAIL line per criterion, then a non-zero exit
//! if any criterion failed. Runs without the libtest harness so the lines
//! are printed in order and never captured.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};
use tooldag::eval::{
    conditional_gap, corpus_threshold, decode_dag, evaluate, logo_cv, scored_trajectories, symmetric_difference,
    CorpusEntry, DatasetOptions, EvalOptions, FeatureSpec, PairDataset, PatchInput, Task,
};
use tooldag::features::FeatureVariant;
use tooldag::oracle::{
    oracle_agreement, pair_space, select_minimal_pairs, substring_edges, transitive_closure, typed_edges,
    AgreementStats, EdgeSet, MinimalPair,
};
use tooldag::probe::{FittedProbe, ProbeConfig};
use tooldag::stats::{auroc, bca_ci, fisher_exact_2x2, wilcoxon_signed_rank};
use tooldag::synth::{generate_corpus, typed_corpus, SignalMode, SynthConfig, SynthCorpus};
use tooldag::trajlog::{Condition, ToolCall, Trajectory};

const BIN: &str = env!("CARGO_BIN_EXE_tooldag");

// Pinned tolerances and budgets.
const C1_TRAJECTORIES: usize = 1000;
const C1_BUDGET: Duration = Duration::from_secs(10);
const C2_GRAPHS: usize = 1000;
const C2_MAX_N: usize = 10;
const C4_INSTANCES: usize = 500;
const C4_MAX_N: usize = 50;
const C4_TOL: f64 = 1e-12;
const C5_PERMS: usize = 200;
const C5_NULL_MEAN: (f64, f64) = (0.48, 0.52);
const C5_MIN_P: f64 = 0.1;
const C6_TRAJECTORIES: &str = "100";
const C6_NOISE_SD: &str = "0.5";
const C6_PERMS: usize = 200;
const C6_MIN_AUROC: f64 = 0.95;
const C6_BUDGET: Duration = Duration::from_secs(60);
const C7_MAX_NULL_GAP: f64 = 0.02;
const C7_MIN_GAP: f64 = 0.10;
const C7_RESAMPLES: usize = 2000;
const C8_MIN_TOWARD_DONOR: f64 = 0.8;
const C10_WILCOXON_P: f64 = 0.125;
const C10_COVERAGE: (f64, f64) = (0.92, 0.975);
const C10_TRIALS: usize = 500;
const C10_FISHER: (f64, f64) = (0.27, 0.02);

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn entries(c: &SynthCorpus) -> Vec<CorpusEntry<'_>> {
    c.trajectories
        .iter()
        .zip(&c.stores)
        .zip(&c.graphs)
        .map(|((traj, store), graph)| CorpusEntry { traj, store, graph })
        .collect()
}

fn synth(mode: SignalMode, n: usize, noise_sd: f64, seed: u64) -> SynthCorpus {
    generate_corpus(&SynthConfig {
        n_trajectories: n,
        signal_mode: mode,
        noise_sd,
        seed,
        ..SynthConfig::default()
    })
    .expect("synthetic corpus")
}

fn v1_dataset(c: &SynthCorpus) -> PairDataset<f64> {
    PairDataset::build(&entries(c), &DatasetOptions::default()).expect("dataset")
}

// ---- criterion 1 -------------------------------------------------------

const ALPHABET: &[u8] = b"abcXYZ019-_:.";

/// Up to `max_len` characters, with whitespace runs drawn from `whitespace`.
fn random_text(rng: &mut ChaCha8Rng, max_len: usize, whitespace: &[&str]) -> String {
    let mut s = String::new();
    for _ in 0..rng.random_range(0..=max_len) {
        if rng.random_bool(0.15) {
            s.push_str(whitespace[rng.random_range(0..whitespace.len())]);
        } else {
            s.push(ALPHABET[rng.random_range(0..ALPHABET.len())] as char);
        }
    }
    s
}

/// Calls whose arguments often quote pieces of earlier outputs, with
/// pieces around the four-character threshold.
fn random_trajectory(k: usize, rng: &mut ChaCha8Rng) -> Trajectory {
    let n = rng.random_range(2..=6);
    let mut outputs: Vec<String> = Vec::new();
    let mut calls = Vec::new();
    for c in 0..n {
        let mut args = Map::new();
        for a in 0..rng.random_range(1..=3) {
            let value = if c > 0 && rng.random_bool(0.6) {
                let src: Vec<char> = outputs[rng.random_range(0..c)].chars().collect();
                let len = rng.random_range(2..=7).min(src.len());
                let start = rng.random_range(0..=src.len() - len);
                let piece: String = src[start..start + len].iter().collect();
                // Argument strings never carry escaped whitespace.
                let piece = piece.replace(['\n', '\t'], " ");
                format!("{}{}", random_text(rng, 2, &[" "]), piece)
            } else {
                random_text(rng, 9, &[" "])
            };
            args.insert(format!("k{a}"), Value::String(value));
        }
        let output = random_text(rng, 29, &[" ", "  ", "\n", "\t ", " \n\n"]);
        outputs.push(output.clone());
        calls.push(ToolCall {
            index: c,
            tool_name: format!("tool{}", rng.random_range(0..3)),
            arguments: args,
            output_text: output,
            boundary_index: c,
        });
    }
    Trajectory {
        trajectory_id: format!("r{k}"),
        task_id: format!("r{k}"),
        condition: Condition::Clean,
        reward: None,
        calls,
    }
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Window containment over a hand-rolled serialisation of string-only
/// arguments: `{"k": "v", ...}`.
fn brute_force_edges(t: &Trajectory) -> EdgeSet {
    let outs: Vec<Vec<char>> = t.calls.iter().map(|c| collapse(&c.output_text).chars().collect()).collect();
    let args: Vec<String> = t
        .calls
        .iter()
        .map(|c| {
            let parts: Vec<String> = c
                .arguments
                .iter()
                .map(|(k, v)| format!("\"{k}\": \"{}\"", v.as_str().unwrap()))
                .collect();
            collapse(&format!("{{{}}}", parts.join(", ")))
        })
        .collect();
    let mut edges = EdgeSet::new();
    for j in 0..t.calls.len() {
        for i in 0..j {
            if outs[i].windows(4).any(|w| args[j].contains(&w.iter().collect::<String>())) {
                edges.insert((i, j));
            }
        }
    }
    edges
}

fn c1_oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trajs: Vec<Trajectory> = (0..C1_TRAJECTORIES).map(|k| random_trajectory(k, &mut rng)).collect();
    let start = Instant::now();
    let graphs: Vec<_> = trajs.iter().map(|t| substring_edges(t).expect("oracle")).collect();
    let elapsed = start.elapsed();
    let mut mismatches = 0;
    let mut n_edges = 0;
    for (t, g) in trajs.iter().zip(&graphs) {
        let b = brute_force_edges(t);
        n_edges += b.len();
        mismatches += (g.direct_edges() != &b) as usize;
    }
    ensure(n_edges > 0, || "generator produced no edges".into())?;
    ensure(mismatches == 0, || format!("{mismatches} mismatching trajectories"))?;
    ensure(elapsed < C1_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{C1_TRAJECTORIES} trajectories, {n_edges} edges, 0 mismatches, {elapsed:.2?}"))
}

// ---- criterion 2 -------------------------------------------------------

fn floyd_warshall(n: usize, edges: &EdgeSet) -> EdgeSet {
    let mut r = vec![vec![false; n]; n];
    for &(i, j) in edges {
        r[i][j] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    let mut out = EdgeSet::new();
    for (i, row) in r.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v {
                out.insert((i, j));
            }
        }
    }
    out
}

fn c2_closure_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut total = 0;
    for g in 0..C2_GRAPHS {
        let n = rng.random_range(1..=C2_MAX_N);
        let p: f64 = rng.random_range(0.0..0.8);
        let mut direct = EdgeSet::new();
        for j in 0..n {
            for i in 0..j {
                if rng.random_bool(p) {
                    direct.insert((i, j));
                }
            }
        }
        let got = transitive_closure(&direct, n).map_err(|e| e.to_string())?;
        let want = floyd_warshall(n, &direct);
        ensure(got == want, || format!("graph {g} (n = {n}) differs"))?;
        total += want.len();
    }
    Ok(format!("{C2_GRAPHS} DAGs, {total} reachable pairs, exact"))
}

// ---- criterion 3 -------------------------------------------------------

fn c3_typed_subset() -> Check {
    let mut agg = AgreementStats::default();
    let mut n_traj = 0;
    for seed in 1..=5 {
        let c = typed_corpus(100, seed).map_err(|e| e.to_string())?;
        for t in &c.trajectories {
            let typed = typed_edges(t, &c.schema).map_err(|e| e.to_string())?;
            let sub = substring_edges(t).map_err(|e| e.to_string())?;
            ensure(typed.direct_edges().is_subset(sub.direct_edges()), || {
                format!("{}: typed edges not within substring edges", t.trajectory_id)
            })?;
            agg.accumulate(&oracle_agreement(&sub, &typed).map_err(|e| e.to_string())?);
            n_traj += 1;
        }
    }
    ensure(!agg.precision_vacuous(), || "typed oracle found no edges".into())?;
    ensure(agg.precision() == 1.0, || format!("precision {}", agg.precision()))?;
    Ok(format!("{n_traj} trajectories, {} typed edges, precision 1.000", agg.true_positive))
}

// ---- criterion 4 -------------------------------------------------------

fn pairwise_auroc(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, &ya) in s.iter().zip(y) {
        for (b, &yb) in s.iter().zip(y) {
            if ya && !yb {
                den += 1.0;
                num += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn c4_auroc_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for k in 0..C4_INSTANCES {
        let n = rng.random_range(2..=C4_MAX_N);
        let tied = k % 2 == 0;
        let s: Vec<f64> = (0..n)
            .map(|_| if tied { rng.random_range(0..5) as f64 } else { rng.random_range(-3.0..3.0) })
            .collect();
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        y[0] = true;
        y[1] = false;
        let got = auroc(&s, &y).map_err(|e| e.to_string())?;
        worst = worst.max((got - pairwise_auroc(&s, &y)).abs());
    }
    ensure(worst <= C4_TOL, || format!("max error {worst:e}"))?;
    Ok(format!("{C4_INSTANCES} instances, max |error| {worst:.1e}"))
}

// ---- criterion 5 -------------------------------------------------------

fn c5_null_calibration() -> Check {
    let c = synth(SignalMode::None, 60, 1.0, 5);
    let ds = v1_dataset(&c);
    let opts = EvalOptions {
        n_perms: C5_PERMS,
        ..EvalOptions::default()
    };
    let (r, _) = evaluate(&ds, &FeatureSpec::residual("V1"), Task::Direct, &opts).map_err(|e| e.to_string())?;
    let perm = r.permutation.ok_or("no permutation control")?;
    ensure((C5_NULL_MEAN.0..=C5_NULL_MEAN.1).contains(&perm.null_mean), || {
        format!("null mean {:.4}", perm.null_mean)
    })?;
    ensure(perm.p_value > C5_MIN_P, || format!("p = {:.3}", perm.p_value))?;
    Ok(format!(
        "observed {:.3}, null mean {:.4}, p = {:.3} over {} perms",
        perm.observed, perm.null_mean, perm.p_value, perm.n_perms
    ))
}

// ---- criteria 6 and 11 -------------------------------------------------

fn run_cli(args: &[&str]) -> Result<PathBuf, String> {
    let o = Command::new(BIN).args(args).output().map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
    }
    Ok(PathBuf::from(String::from_utf8_lossy(&o.stdout).trim()))
}

fn probe_run(corpus: &Path, out: &Path, jobs: &str) -> Result<(PathBuf, Duration), String> {
    let perms = C6_PERMS.to_string();
    let start = Instant::now();
    let dir = run_cli(&[
        "probe",
        "--corpus",
        corpus.to_str().unwrap(),
        "--n-perms",
        &perms,
        "--jobs",
        jobs,
        "--out",
        out.to_str().unwrap(),
    ])?;
    Ok((dir, start.elapsed()))
}

struct Planted {
    _tmp: tempfile::TempDir,
    corpus: PathBuf,
    first: Option<(PathBuf, Duration)>,
}

fn planted_corpus() -> Result<Planted, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().to_str().unwrap().to_string();
    let corpus = run_cli(&[
        "synth",
        "--n-trajectories",
        C6_TRAJECTORIES,
        "--noise-sd",
        C6_NOISE_SD,
        "--signal-mode",
        "planted_linear",
        "--out",
        &out,
    ])?;
    Ok(Planted {
        _tmp: tmp,
        corpus,
        first: None,
    })
}

fn c6_planted_recovery(p: &mut Planted) -> Check {
    let out = p.corpus.parent().unwrap().join("jobs1");
    let (dir, elapsed) = probe_run(&p.corpus, &out, "1")?;
    p.first = Some((dir.clone(), elapsed));
    let r: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let a = r["auroc"].as_f64().ok_or("no AUROC")?;
    let p_value = r["permutation"]["p_value"].as_f64().ok_or("no permutation control")?;
    ensure(a >= C6_MIN_AUROC, || format!("AUROC {a:.4}"))?;
    ensure(p_value <= 1.0 / C6_PERMS as f64, || format!("p = {p_value}"))?;
    ensure(elapsed < C6_BUDGET, || format!("run took {elapsed:.1?}"))?;
    Ok(format!("AUROC {a:.4}, p = {p_value} over {C6_PERMS} perms, run {elapsed:.1?}"))
}

fn c11_determinism(p: &Planted) -> Check {
    let (first, _) = p.first.clone().ok_or("criterion 6 run missing")?;
    let out = p.corpus.parent().unwrap().join("jobs2");
    let (second, _) = probe_run(&p.corpus, &out, "2")?;
    for f in ["report.json", "scores.csv", "strata.csv", "summary.csv", "config.json"] {
        let a = fs::read(first.join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(second.join(f)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{f} differs between --jobs 1 and --jobs 2"))?;
    }
    Ok("report.json, scores.csv, strata.csv, summary.csv identical under --jobs 1 and 2".into())
}

// ---- criterion 7 -------------------------------------------------------

fn c7_gap_dissociation() -> Check {
    let cfg = ProbeConfig::default();
    let v1 = FeatureSpec::residual("V1");
    let pos = FeatureSpec::positional();
    let c = synth(SignalMode::PositionalOnly, 60, 1.0, 7);
    let ds = v1_dataset(&c);
    let g0 = conditional_gap(&ds, &v1, &pos, &ds.labels(Task::Direct), &cfg, C7_RESAMPLES, 1).map_err(|e| e.to_string())?;
    ensure(g0.delta.point.abs() <= C7_MAX_NULL_GAP, || format!("positional gap {:.4}", g0.delta.point))?;
    ensure(g0.delta.lo <= 0.0 && 0.0 <= g0.delta.hi, || {
        format!("positional CI [{:.4}, {:.4}] excludes 0", g0.delta.lo, g0.delta.hi)
    })?;
    let c = synth(SignalMode::PlantedLinear, 60, 1.0, 7);
    let ds = v1_dataset(&c);
    let g1 = conditional_gap(&ds, &v1, &pos, &ds.labels(Task::Direct), &cfg, C7_RESAMPLES, 1).map_err(|e| e.to_string())?;
    ensure(g1.delta.point >= C7_MIN_GAP, || format!("planted gap {:.4}", g1.delta.point))?;
    ensure(g1.delta.p_delta_le_zero == Some(0.0), || format!("P(delta <= 0) = {:?}", g1.delta.p_delta_le_zero))?;
    Ok(format!(
        "positional delta {:+.4} [{:+.4}, {:+.4}]; planted delta {:+.4}, P(delta <= 0) = 0/{C7_RESAMPLES}",
        g0.delta.point, g0.delta.lo, g0.delta.hi, g1.delta.point
    ))
}

// ---- criterion 8 -------------------------------------------------------

fn inputs<'a>(c: &'a SynthCorpus, pairs: &'a [MinimalPair]) -> Vec<PatchInput<'a>> {
    let at = |id: &str| c.trajectories.iter().position(|t| t.trajectory_id == id).expect("pair member");
    pairs
        .iter()
        .map(|p| {
            let (d, t) = (at(&p.donor_id), at(&p.target_id));
            PatchInput {
                pair: p,
                donor: &c.trajectories[d],
                donor_store: &c.stores[d],
                target: &c.trajectories[t],
                target_store: &c.stores[t],
            }
        })
        .collect()
}

fn c8_patch_contract() -> Check {
    let c = synth(SignalMode::DonorContrast, 40, 0.5, 8);
    let list: Vec<_> = c.trajectories.iter().zip(&c.graphs).collect();
    let pairs = select_minimal_pairs(&list);
    ensure(!pairs.is_empty(), || "no minimal pairs".into())?;
    let ds = v1_dataset(&c);
    let rows: Vec<usize> = (0..ds.len()).collect();
    let v1 = FeatureSpec::residual("V1");
    let x = v1.design(&ds, &rows, None).map_err(|e| e.to_string())?;
    let probe = FittedProbe::fit(x.view(), &ds.labels(Task::Direct), &ProbeConfig::default()).map_err(|e| e.to_string())?;
    let variant = FeatureVariant::v1();

    let selfs: Vec<MinimalPair> = pairs
        .iter()
        .map(|p| MinimalPair {
            donor_id: p.target_id.clone(),
            ..p.clone()
        })
        .collect();
    let mut layers_checked = Vec::new();
    for &layer in &variant.layer_ids {
        let id = tooldag::eval::patch_estimate(&inputs(&c, &selfs), &probe, &variant, layer, 0, 1).map_err(|e| e.to_string())?;
        ensure(id.per_pair_delta.iter().all(|&d| d == 0.0), || format!("identity patch at layer {layer} moved"))?;
        let r = tooldag::eval::patch_estimate(&inputs(&c, &pairs), &probe, &variant, layer, 2000, 1).map_err(|e| e.to_string())?;
        let ci = r.ci.clone().ok_or("no interval")?;
        ensure(r.mean > 0.0 && ci.lo > 0.0, || {
            format!("layer {layer}: mean {:.4}, CI [{:.4}, {:.4}]", r.mean, ci.lo, ci.hi)
        })?;
        ensure(r.frac_toward_donor >= C8_MIN_TOWARD_DONOR, || {
            format!("layer {layer}: {:.2} toward donor", r.frac_toward_donor)
        })?;
        layers_checked.push(format!("L{layer} {:+.3} [{:+.3}, {:+.3}]", r.mean, ci.lo, ci.hi));
    }

    // A probe over layer 28 alone cannot be reached through layer 0.
    let single = FeatureVariant::single_layer(28);
    let opts = DatasetOptions {
        variants: vec![single.clone()],
        ..DatasetOptions::default()
    };
    let ds28 = PairDataset::<f64>::build(&entries(&c), &opts).map_err(|e| e.to_string())?;
    let spec = FeatureSpec::residual(&single.name);
    let x = spec.design(&ds28, &rows, None).map_err(|e| e.to_string())?;
    let probe28 = FittedProbe::fit(x.view(), &ds28.labels(Task::Direct), &ProbeConfig::default()).map_err(|e| e.to_string())?;
    let z = tooldag::eval::patch_estimate(&inputs(&c, &pairs), &probe28, &single, 0, 0, 1).map_err(|e| e.to_string())?;
    ensure(z.structural_zero && z.per_pair_delta.iter().all(|&d| d == 0.0), || {
        "layer outside the pooled set moved the score".into()
    })?;
    Ok(format!(
        "{} pairs; identity deltas 0; {}; structural zero at L0",
        pairs.len(),
        layers_checked.join(", ")
    ))
}

// ---- criterion 9 -------------------------------------------------------

fn c9_decode_fidelity() -> Check {
    let c = synth(SignalMode::PlantedLinear, 60, 0.0, 9);
    let ds = v1_dataset(&c);
    let labels = ds.labels(Task::Direct);
    let s = logo_cv(&ds, &FeatureSpec::residual("V1"), &labels, &ProbeConfig::default()).map_err(|e| e.to_string())?;
    let t = corpus_threshold(&ds.meta, &s.scores, Task::Direct).map_err(|e| e.to_string())?;
    let (scored, dropped) = scored_trajectories(&ds.meta, &s.scores).map_err(|e| e.to_string())?;
    ensure(dropped.is_empty(), || format!("{} trajectories unscored", dropped.len()))?;
    let (mut nonzero, mut cyclic) = (0, 0);
    for st in &scored {
        let d = decode_dag(st.n, &st.scores, t).map_err(|e| e.to_string())?;
        nonzero += (symmetric_difference(d.graph.direct_edges(), st.oracle.direct_edges(), &pair_space(st.n)) != 0) as usize;
        cyclic += !d.acyclic as usize;
    }
    ensure(nonzero == 0, || format!("{nonzero} trajectories with SD > 0"))?;
    ensure(cyclic == 0, || format!("{cyclic} decoded graphs fail the acyclicity audit"))?;
    Ok(format!("{} trajectories, SD 0 for all, {} of {} acyclic", scored.len(), scored.len(), scored.len()))
}

// ---- criterion 10 ------------------------------------------------------

/// One-sided exact p of W+ by enumerating every sign assignment.
fn sign_enumeration_p(diffs: &[f64]) -> f64 {
    let mut abs: Vec<(f64, bool)> = diffs.iter().map(|&d| (d.abs(), d > 0.0)).collect();
    abs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let ranks: Vec<f64> = (1..=abs.len()).map(|r| r as f64).collect();
    let observed: f64 = abs.iter().zip(&ranks).filter(|(a, _)| a.1).map(|(_, r)| r).sum();
    let n = abs.len();
    let hits = (0..1u32 << n)
        .filter(|mask| (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| ranks[k]).sum::<f64>() >= observed)
        .count();
    hits as f64 / (1u32 << n) as f64
}

fn c10_statistics() -> Check {
    let diffs = [1.0, 2.0, 3.0];
    let w = wilcoxon_signed_rank(&diffs);
    let oracle = sign_enumeration_p(&diffs);
    ensure(oracle == C10_WILCOXON_P, || format!("enumeration gives {oracle}"))?;
    ensure(w.exact && w.p_greater == oracle, || format!("Wilcoxon p {}", w.p_greater))?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mu = 1.0;
    let mut covered = 0;
    for trial in 0..C10_TRIALS {
        let xs: Vec<f64> = (0..30)
            .map(|_| mu + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let ci = bca_ci(&xs, |s: &[&f64]| Some(s.iter().copied().sum::<f64>() / s.len() as f64), 2000, trial as u64, "obs")
            .map_err(|e| e.to_string())?;
        covered += (ci.lo <= mu && mu <= ci.hi) as usize;
    }
    let coverage = covered as f64 / C10_TRIALS as f64;
    ensure((C10_COVERAGE.0..=C10_COVERAGE.1).contains(&coverage), || format!("BCa coverage {coverage:.3}"))?;

    let f = fisher_exact_2x2([[15, 105], [22, 98]]);
    ensure((f.p_value - C10_FISHER.0).abs() <= C10_FISHER.1, || format!("Fisher p {:.4}", f.p_value))?;
    Ok(format!(
        "Wilcoxon p {} (enumeration {oracle}); BCa coverage {coverage:.3} over {C10_TRIALS}; Fisher p {:.4}",
        w.p_greater, f.p_value
    ))
}

// ---- driver ------------------------------------------------------------

fn report(id: u32, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let t = start.elapsed();
    match outcome {
        Ok(detail) => {
            println!("PASS {id:>2} {name}: {detail} ({t:.1?})");
            true
        }
        Err(detail) => {
            println!("FAIL {id:>2} {name}: {detail} ({t:.1?})");
            false
        }
    }
}

fn main() -> ExitCode {
    // Respect a name filter passed by `cargo test -- <filter>`.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    if filter.as_deref().is_some_and(|f| !"acceptance".contains(f)) {
        return ExitCode::SUCCESS;
    }

    let mut results = vec![
        report(1, "oracle equivalence", c1_oracle_equivalence),
        report(2, "closure equivalence", c2_closure_equivalence),
        report(3, "typed oracle subset", c3_typed_subset),
        report(4, "AUROC exactness", c4_auroc_exactness),
        report(5, "null calibration", c5_null_calibration),
    ];
    let mut planted = planted_corpus();
    results.push(report(6, "planted recovery", || c6_planted_recovery(planted.as_mut().map_err(|e| e.clone())?)));
    results.push(report(7, "conditional-gap dissociation", c7_gap_dissociation));
    results.push(report(8, "patch contract", c8_patch_contract));
    results.push(report(9, "decode fidelity", c9_decode_fidelity));
    results.push(report(10, "statistics cross-checks", c10_statistics));
    results.push(report(11, "determinism across --jobs", || c11_determinism(planted.as_ref().map_err(|e| e.clone())?)));

    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
