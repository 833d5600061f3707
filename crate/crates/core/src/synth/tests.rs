use super::*;
use crate::features::pool_calls;
use crate::oracle::{select_minimal_pairs, substring_edges, typed_edges};
use crate::stats::auroc;
use crate::trajlog::{load_activations, pair_corpus, parse_log};

fn cfg(mode: SignalMode) -> SynthConfig {
    SynthConfig {
        n_trajectories: 24,
        min_calls: 2,
        max_calls: 8,
        hidden_dim: 8,
        signal_mode: mode,
        ..SynthConfig::default()
    }
}

fn all_modes() -> Vec<SignalMode> {
    vec![
        SignalMode::None,
        SignalMode::PositionalOnly,
        SignalMode::PlantedLinear,
        SignalMode::PlantedDirectional,
        SignalMode::LayerLocalized { layer: 28 },
        SignalMode::HopGraded,
        SignalMode::DonorContrast,
    ]
}

#[test]
fn substring_oracle_recovers_generator_graph() {
    for mode in all_modes() {
        for seed in 0..5 {
            let c = generate_corpus(&SynthConfig { seed, ..cfg(mode.clone()) }).unwrap();
            for (t, g) in c.trajectories.iter().zip(&c.graphs) {
                assert_eq!(&substring_edges(t).unwrap(), g, "{mode:?} {}", t.trajectory_id);
            }
        }
    }
}

#[test]
fn identical_configs_identical_corpora() {
    let a = generate_corpus(&cfg(SignalMode::PlantedLinear)).unwrap();
    let b = generate_corpus(&cfg(SignalMode::PlantedLinear)).unwrap();
    assert_eq!(trajlog::to_jsonl(&a.trajectories).unwrap(), trajlog::to_jsonl(&b.trajectories).unwrap());
    for (x, y) in a.stores.iter().zip(&b.stores) {
        assert_eq!(x.values(), y.values());
    }
    let c = generate_corpus(&SynthConfig { seed: 43, ..cfg(SignalMode::PlantedLinear) }).unwrap();
    assert_ne!(a.stores[0].values(), c.stores[0].values());
}

#[test]
fn noiseless_certificate_separates_edges() {
    let c = generate_corpus(&SynthConfig {
        noise_sd: 0.0,
        n_trajectories: 40,
        ..cfg(SignalMode::PlantedLinear)
    })
    .unwrap();
    let cert = c.certificate.clone().unwrap();
    let d = c.config.hidden_dim;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for ((t, s), g) in c.trajectories.iter().zip(&c.stores).zip(&c.graphs) {
        let pooled = pool_calls::<f64>(t, s, &cert.layer_ids).unwrap();
        for i in 0..t.n_agent() {
            for j in i + 1..t.n_agent() {
                let score: f64 = (0..d)
                    .map(|k| cert.weights[k] * pooled[i][k] + cert.weights[d + k] * pooled[j][k])
                    .sum::<f64>()
                    + cert.bias;
                assert_eq!(score > 0.0, g.has_direct(i, j));
                scores.push(score);
                labels.push(g.has_direct(i, j));
            }
        }
    }
    assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
}

#[test]
fn donor_pairs_are_minimal_pairs() {
    let c = generate_corpus(&cfg(SignalMode::DonorContrast)).unwrap();
    let corpus: Vec<_> = c.trajectories.iter().zip(&c.graphs).collect();
    let pairs = select_minimal_pairs(&corpus);
    assert_eq!(pairs.len(), 12);
    for (k, p) in pairs.iter().enumerate() {
        assert_eq!(p.donor_id, c.trajectories[2 * k].trajectory_id);
        assert_eq!(p.target_id, c.trajectories[2 * k + 1].trajectory_id);
        assert!(p.donor_has_edge);
        let (i, _) = p.differing_edge;
        let (a, b) = (&c.stores[2 * k], &c.stores[2 * k + 1]);
        // Only call i's boundary differs between donor and target.
        for bnd in 0..a.n_boundaries() {
            let same = c.config.layer_ids.iter().all(|&l| a.vector(bnd, l).unwrap() == b.vector(bnd, l).unwrap());
            assert_eq!(same, bnd != 2 * i + 1);
        }
    }
}

#[test]
fn plan_change_counterparts() {
    let base = cfg(SignalMode::PlantedLinear);
    let clean = generate_corpus(&base).unwrap();
    let cf = plan_change(&base).unwrap();
    let pairing = pair_corpus(&clean.trajectories, &cf.trajectories).unwrap();
    assert_eq!(pairing.pairs.len(), 24);
    for ((a, b), (ga, gb)) in clean.trajectories.iter().zip(&cf.trajectories).zip(clean.graphs.iter().zip(&cf.graphs)) {
        let m = a.n_agent() / 2;
        assert_eq!(b.calls[m].output_text, "{}");
        assert_eq!(b.condition, Condition::SkipTool);
        assert!(gb.direct_edges().iter().all(|&(i, _)| i != m));
        let kept: EdgeSet = ga.direct_edges().iter().filter(|&&(i, _)| i != m).copied().collect();
        assert_eq!(gb.direct_edges(), &kept);
        assert_eq!(&substring_edges(b).unwrap(), gb);
    }
}

#[test]
fn typed_corpus_truth_and_subset() {
    let c = typed_corpus(200, 5).unwrap();
    let mut n_edges = 0;
    for (t, g) in c.trajectories.iter().zip(&c.graphs) {
        let typed = typed_edges(t, &c.schema).unwrap();
        assert_eq!(&typed, g, "{}", t.trajectory_id);
        let sub = substring_edges(t).unwrap();
        assert!(typed.direct_edges().is_subset(sub.direct_edges()));
        n_edges += g.direct_edges().len();
    }
    assert!(n_edges > 100);
}

#[test]
fn invalid_configs() {
    let bad = [
        SynthConfig { max_calls: 1, min_calls: 1, ..SynthConfig::default() },
        SynthConfig { min_calls: 5, max_calls: 4, ..SynthConfig::default() },
        SynthConfig { edge_density: 1.5, ..SynthConfig::default() },
        SynthConfig { layer_ids: vec![3, 1], ..SynthConfig::default() },
        SynthConfig { signal_mode: SignalMode::LayerLocalized { layer: 5 }, ..SynthConfig::default() },
        SynthConfig { signal_mode: SignalMode::DonorContrast, n_trajectories: 3, ..SynthConfig::default() },
    ];
    for c in bad {
        assert!(generate_corpus(&c).is_err(), "{c:?}");
    }
}

#[test]
fn corpus_round_trips_through_disk() {
    let c = generate_corpus(&cfg(SignalMode::LayerLocalized { layer: 41 })).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &c).unwrap();
    let log = parse_log(&dir.path().join("log.jsonl")).unwrap();
    assert_eq!(log, c.trajectories);
    let store = load_activations(
        &dir.path().join("activations").join(activation_file_name(&log[3].trajectory_id)),
        &log[3],
    )
    .unwrap();
    assert_eq!(store, c.stores[3]);
    assert!(dir.path().join("certificate.json").exists());
    assert!(dir.path().join("truth.jsonl").exists());
}

#[test]
fn config_json_round_trip() {
    let c = SynthConfig {
        signal_mode: SignalMode::LayerLocalized { layer: 14 },
        ..SynthConfig::default()
    };
    let text = serde_json::to_string(&c).unwrap();
    assert!(text.contains(r#""signal_mode":{"mode":"layer_localized","layer":14}"#));
    assert_eq!(serde_json::from_str::<SynthConfig>(&text).unwrap(), c);
    let partial: SynthConfig = serde_json::from_str(r#"{"n_trajectories": 7}"#).unwrap();
    assert_eq!(partial.n_trajectories, 7);
    assert_eq!(partial.hidden_dim, 64);
}
