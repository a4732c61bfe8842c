use causal_audit::data::PaperRecord;
use causal_audit::fairrank::{
    self, EvalOptions, FairnessConfig, FairnessGroups, FeatureEncoder, Mlp, RankerModel, TrainOptions,
};
use causal_audit::metrics::parity_gap;
use causal_audit::scm::{self, ScmConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn biased(n: usize, seed: u64) -> Vec<PaperRecord> {
    let mut cfg = ScmConfig {
        n_units: n,
        seed,
        tau_race: -1.0,
        tau_country: -1.0,
        coef_conf_institution: 0.0,
        ..ScmConfig::default()
    };
    cfg.base_rates.race = 0.25;
    cfg.base_rates.country = 0.25;
    scm::generate(&cfg).unwrap().into_iter().map(|u| u.record).collect()
}

fn hyper(epochs: usize) -> TrainOptions {
    TrainOptions {
        epochs,
        ..TrainOptions::default()
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..30 {
        let n = rng.random_range(3..20);
        let width = rng.random_range(1..5);
        let mut dims = vec![width];
        (0..rng.random_range(0..3)).for_each(|_| dims.push(rng.random_range(1..6)));
        dims.push(1);
        let mut net = Mlp::init(&dims, &mut rng).unwrap();
        // keep relu inputs off the kink at zero
        for l in &mut net.layers {
            l.biases.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..width).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let mut groups = FairnessGroups {
            race: (0..n).map(|_| rng.random_bool(0.5)).collect(),
            country: (0..n).map(|_| rng.random_bool(0.5)).collect(),
        };
        groups.race[0] = true;
        groups.country[0] = true;
        let cfg = FairnessConfig {
            lambda: if case % 4 == 0 { 0.0 } else { rng.random_range(0.1..20.0) },
            w_race: rng.random_range(0.0..2.0),
            w_country: rng.random_range(0.0..2.0),
        };
        let (_, grad) = fairrank::loss_and_gradient(&net, &x, &y, &groups, &cfg).unwrap();
        let p = net.params();
        let mut probe = net.clone();
        for k in 0..p.len() {
            let mut at = |v: f64| {
                let mut q = p.clone();
                q[k] = v;
                probe.set_params(&q);
                fairrank::loss_and_gradient(&probe, &x, &y, &groups, &cfg).unwrap().0.total
            };
            let h = 1e-6;
            let num = (at(p[k] + h) - at(p[k] - h)) / (2.0 * h);
            let rel = (grad[k] - num).abs() / grad[k].abs().max(num.abs()).max(1e-6);
            assert!(rel < 1e-4, "case {case} dims {dims:?} param {k}: {} vs {num}", grad[k]);
        }
    }
}

#[test]
fn total_loss_matches_straight_line_recomputation() {
    let p: [f64; 8] = [0.9, 0.2, 0.65, 0.4, 0.05, 0.75, 0.5, 0.33];
    let y = [true, false, true, true, false, false, true, false];
    let race = [true, false, false, true, false, false, true, false];
    let country = [false, true, false, false, false, true, false, false];
    let cfg = FairnessConfig {
        lambda: 2.5,
        w_race: 0.7,
        w_country: 1.3,
    };
    let n = 8.0;
    let mut ce = 0.0;
    for i in 0..8 {
        ce -= if y[i] { p[i].ln() } else { (1.0 - p[i]).ln() };
    }
    ce /= n;
    let mean = p.iter().sum::<f64>() / n;
    let gmean = |g: &[bool]| {
        let (s, c) = p.iter().zip(g).filter(|(_, &m)| m).fold((0.0, 0.0), |(s, c), (v, _)| (s + v, c + 1.0));
        s / c
    };
    let fair = 0.7 * (gmean(&race) - mean).powi(2) + 1.3 * (gmean(&country) - mean).powi(2);
    let groups = FairnessGroups {
        race: race.to_vec(),
        country: country.to_vec(),
    };
    let got = fairrank::total_loss(&p, &y, &groups, &cfg).unwrap();
    assert!((got - (ce + 2.5 * fair)).abs() < 1e-10);
    assert!((fairrank::fairness_loss(&p, &groups, &cfg).unwrap() - fair).abs() < 1e-12);
}

#[test]
fn convex_case_loss_never_increases() {
    let recs = biased(600, 3);
    let opts = TrainOptions {
        epochs: 300,
        lr: 0.1,
        seed: 1,
        hidden_dims: vec![],
    };
    let (model, trace) = fairrank::train_with_trace(&recs, &FairnessConfig::default(), &opts).unwrap();
    assert_eq!(model.layer_dims, vec![5, 1]);
    assert_eq!(trace.len(), 301);
    assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-15), "loss went up");
    assert!(trace[300] < trace[0]);
}

#[test]
fn separable_toy_is_learned_exactly() {
    let recs: Vec<PaperRecord> = (0..40)
        .map(|i| {
            let h = i as f64;
            PaperRecord {
                id: format!("t{i:02}"),
                race: i % 2 == 0,
                gender: i % 3 == 0,
                country: i % 5 == 0,
                h_index: h,
                prestige: 0.0,
                outcome: if h >= 20.0 { 3 } else { 1 },
            }
        })
        .collect();
    // 3000 full-batch epochs at lr 0.5 suffice for this fixture
    let opts = TrainOptions {
        epochs: 3000,
        lr: 0.5,
        seed: 0,
        hidden_dims: vec![8],
    };
    let model = fairrank::train(&recs, &FairnessConfig::default(), &opts).unwrap();
    let scores = model.scores(&recs).unwrap();
    let correct = scores.iter().zip(&recs).filter(|(s, r)| (**s > 0.5) == r.accepted()).count();
    assert_eq!(correct, recs.len());
}

#[test]
fn heavy_penalty_equalizes_group_means() {
    let recs = biased(1500, 9);
    let cfg = FairnessConfig {
        lambda: 100.0,
        w_race: 1.0,
        w_country: 1.0,
    };
    let model = fairrank::train(&recs, &cfg, &hyper(1500)).unwrap();
    let scores = model.scores(&recs).unwrap();
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    for g in [FairnessGroups::from_records(&recs).race, FairnessGroups::from_records(&recs).country] {
        let (s, c) = scores.iter().zip(&g).filter(|(_, &m)| m).fold((0.0, 0.0), |(s, c), (v, _)| (s + v, c + 1.0));
        assert!((s / c - mean).abs() < 0.01, "{}", s / c - mean);
        assert!(parity_gap(&scores, &g).unwrap() < 0.01);
    }
}

#[test]
fn training_is_deterministic() {
    let recs = biased(300, 1);
    let cfg = FairnessConfig {
        lambda: 3.0,
        ..FairnessConfig::default()
    };
    let a = fairrank::train(&recs, &cfg, &hyper(100)).unwrap();
    let b = fairrank::train(&recs, &cfg, &hyper(100)).unwrap();
    assert_eq!(a, b);
    let json = serde_json::to_string(&a).unwrap();
    let back: RankerModel = serde_json::from_str(&json).unwrap();
    assert_eq!(back.scores(&recs).unwrap(), a.scores(&recs).unwrap());
}

#[test]
fn sweep_shrinks_race_gap_and_lambda_zero_matches_baseline() {
    let recs = biased(2000, 4);
    let opts = EvalOptions::default();
    let points = fairrank::lambda_sweep(&recs, &[0.0, 5.0], (1.0, 1.0), &hyper(600), &opts).unwrap();
    let gap = |i: usize| points[i].row.rank_gap_race.unwrap().abs();
    assert!(gap(1) < gap(0), "{} vs {}", gap(1), gap(0));

    let base = fairrank::train(&recs, &FairnessConfig::default(), &hyper(600)).unwrap();
    let eval = fairrank::evaluate(&base, &recs, &opts).unwrap();
    assert_eq!(points[0].evaluation.as_ref(), Some(&eval));
    assert_eq!(points[0].row.rank_gap_race, Some(eval.group(causal_audit::data::Attribute::Race).rank_gap));
}

#[test]
fn ablation_rows_behave() {
    let mut cfg = ScmConfig {
        n_units: 2000,
        seed: 6,
        tau_race: -1.0,
        tau_country: 0.0,
        coef_conf_institution: 0.0,
        ..ScmConfig::default()
    };
    cfg.base_rates.race = 0.25;
    cfg.base_rates.country = 0.25;
    let recs: Vec<PaperRecord> = scm::generate(&cfg).unwrap().into_iter().map(|u| u.record).collect();
    let pairs = [(0.0, 0.0), (0.9, 0.1), (0.1, 0.9)];
    let points = fairrank::ablation(&recs, &pairs, 5.0, &hyper(600), &EvalOptions::default()).unwrap();
    assert_eq!(points[0].row.label, "Baseline");
    assert_eq!(points[1].evaluation, points[0].evaluation);
    assert_eq!(points[1].row.rank_gap_race, points[0].row.rank_gap_race);
    let race_gap = |i: usize| points[i].row.rank_gap_race.unwrap().abs();
    assert!(race_gap(2) < race_gap(3), "{} vs {}", race_gap(2), race_gap(3));
    let table = fairrank::ablation_table(&points.iter().map(|p| p.row.clone()).collect::<Vec<_>>());
    assert!(table.contains("Race-Focused (0.9:0.1)"));
}

#[test]
fn encoder_standardizes_h_index() {
    let recs = biased(500, 2);
    let enc = FeatureEncoder::fit(&recs);
    let z: Vec<f64> = enc.encode_all(&recs).iter().map(|f| f[0]).collect();
    let m = z.iter().sum::<f64>() / z.len() as f64;
    let v = z.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / z.len() as f64;
    assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fairness_loss_is_non_negative_and_permutation_invariant(
        rows in prop::collection::vec((0.0..1.0f64, any::<bool>(), any::<bool>()), 2..30),
        wr in 0.0..3.0f64,
        wc in 0.0..3.0f64,
        seed in any::<u64>(),
    ) {
        prop_assume!(rows.iter().any(|r| r.1) && rows.iter().any(|r| r.2));
        let cfg = FairnessConfig { lambda: 1.0, w_race: wr, w_country: wc };
        let split = |rows: &[(f64, bool, bool)]| {
            let p: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let g = FairnessGroups { race: rows.iter().map(|r| r.1).collect(), country: rows.iter().map(|r| r.2).collect() };
            (p, g)
        };
        let (p, g) = split(&rows);
        let base = fairrank::fairness_loss(&p, &g, &cfg).unwrap();
        prop_assert!(base >= 0.0);
        let mut shuffled = rows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let (ps, gs) = split(&shuffled);
        prop_assert!((fairrank::fairness_loss(&ps, &gs, &cfg).unwrap() - base).abs() < 1e-12);
        let flat = vec![p[0]; p.len()];
        prop_assert!(fairrank::fairness_loss(&flat, &g, &cfg).unwrap() < 1e-28);
    }
}
