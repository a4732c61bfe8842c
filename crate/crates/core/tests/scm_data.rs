use causal_audit::data::{self, Attribute, CsvOptions, PaperRecord, TreatmentSpec};
use causal_audit::estimators::naive_difference;
use causal_audit::scm::{self, ScmConfig};
use proptest::prelude::*;

fn records(units: &[scm::SyntheticUnit]) -> Vec<PaperRecord> {
    units.iter().map(|u| u.record.clone()).collect()
}

#[test]
fn true_ate_is_the_potential_outcome_average() {
    let cfg = ScmConfig {
        n_units: 10_000,
        seed: 42,
        tau_race: -0.6,
        ..ScmConfig::default()
    };
    let units = scm::generate(&cfg).unwrap();
    let (mut treated, mut control) = (0u64, 0u64);
    for u in &units {
        treated += u64::from(u.y_if_treated);
        control += u64::from(u.y_if_control);
    }
    let oracle = (treated as f64 - control as f64) / units.len() as f64;
    let got = scm::true_ate(&units).unwrap();
    assert!((got - oracle).abs() < 1e-15);
    assert!(got < -0.1);
}

#[test]
fn shares_track_base_rates() {
    let units = scm::generate(&ScmConfig {
        n_units: 10_000,
        seed: 5,
        ..ScmConfig::default()
    })
    .unwrap();
    let s = data::summarize(&records(&units)).unwrap();
    let rates = ScmConfig::default().base_rates;
    for share in &s.shares {
        let want = rates.get(share.attribute);
        assert!((share.share1 - want).abs() < 0.02, "{}: {} vs {want}", share.attribute, share.share1);
    }
}

#[test]
fn naive_bias_grows_with_confounding_strength() {
    let spec = TreatmentSpec::standard(Attribute::Race);
    let bias = |coef: f64| {
        let cfg = ScmConfig {
            n_units: 20_000,
            seed: 8,
            coef_conf_institution: coef,
            ..ScmConfig::strong_confounding()
        };
        let units = scm::generate(&cfg).unwrap();
        (naive_difference(&records(&units), &spec).unwrap() - scm::true_ate(&units).unwrap()).abs()
    };
    let b: Vec<f64> = [0.0, -0.6, -1.2, -2.4].iter().map(|&c| bias(c)).collect();
    assert!(b[0] < 0.03, "{b:?}");
    assert!(b.windows(2).all(|w| w[1] > w[0]), "{b:?}");
    assert!(b[2] > 0.1, "{b:?}");
}

#[test]
fn strong_preset_naive_bias_exceeds_threshold() {
    let spec = TreatmentSpec::standard(Attribute::Race);
    for seed in 0..3 {
        let cfg = ScmConfig {
            seed,
            n_units: 5000,
            ..ScmConfig::strong_confounding()
        };
        let units = scm::generate(&cfg).unwrap();
        let naive = naive_difference(&records(&units), &spec).unwrap();
        assert!((naive - scm::true_ate(&units).unwrap()).abs() > 0.1);
    }
}

#[test]
fn corpus_sized_file_round_trips_through_summary() {
    let units = scm::generate(&ScmConfig {
        n_units: 530,
        seed: 17,
        ..ScmConfig::default()
    })
    .unwrap();
    let recs = records(&units);
    let mut buf = Vec::new();
    data::write_csv(&recs, &mut buf).unwrap();
    let back = data::parse_csv(buf.as_slice(), CsvOptions::default()).unwrap();
    assert_eq!(data::summarize(back.records()).unwrap(), data::summarize(&recs).unwrap());
}

/// One-pass Welford mean and sample SD, plus extremes.
fn streaming(xs: &[f64]) -> (f64, f64, f64, f64) {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in xs {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (mean, (m2 / (n - 1.0)).sqrt(), lo, hi)
}

fn record_strategy() -> impl Strategy<Value = PaperRecord> {
    (
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        0.0..1e4f64,
        prop_oneof![Just(0.0), Just(1.0), 0.0..1.0f64],
        1u8..=3,
    )
        .prop_map(|(race, gender, country, h_index, prestige, outcome)| PaperRecord {
            id: String::new(),
            race,
            gender,
            country,
            h_index,
            prestige,
            outcome,
        })
}

fn dataset_strategy(min: usize) -> impl Strategy<Value = Vec<PaperRecord>> {
    prop::collection::vec(record_strategy(), min..60).prop_map(|mut v| {
        for (i, r) in v.iter_mut().enumerate() {
            r.id = format!("p{i}");
        }
        v
    })
}

proptest! {
    #[test]
    fn csv_round_trip_is_identity(recs in dataset_strategy(1)) {
        let mut buf = Vec::new();
        data::write_csv(&recs, &mut buf).unwrap();
        let back = data::parse_csv(buf.as_slice(), CsvOptions::default()).unwrap();
        prop_assert_eq!(back.records(), &recs[..]);
    }

    #[test]
    fn summary_matches_streaming_recomputation(recs in dataset_strategy(2)) {
        let s = data::summarize(&recs).unwrap();
        let h: Vec<f64> = recs.iter().map(|r| r.h_index).collect();
        let (mean, sd, lo, hi) = streaming(&h);
        prop_assert!((s.h_index.mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
        prop_assert!((s.h_index.sd - sd).abs() <= 1e-9 * sd.max(1.0));
        prop_assert_eq!((s.h_index.min, s.h_index.max), (lo, hi));
        let y: Vec<f64> = recs.iter().map(|r| f64::from(r.outcome)).collect();
        let (ymean, ysd, _, _) = streaming(&y);
        prop_assert!((s.outcome.mean - ymean).abs() < 1e-12);
        prop_assert!((s.outcome.sd - ysd).abs() < 1e-12);
        let counts: Vec<usize> = (1..=3).map(|k| recs.iter().filter(|r| r.outcome == k).count()).collect();
        prop_assert_eq!(s.outcome_counts.to_vec(), counts);
        let race = recs.iter().filter(|r| r.race).count() as f64 / recs.len() as f64;
        prop_assert!((s.shares[0].share1 - race).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_units_are_consistent_and_deterministic(seed in any::<u64>(), n in 1usize..400, tau in -2.0..2.0f64) {
        let cfg = ScmConfig { n_units: n, seed, tau_race: tau, ..ScmConfig::default() };
        let units = scm::generate(&cfg).unwrap();
        prop_assert_eq!(&units, &scm::generate(&cfg).unwrap());
        for u in &units {
            let expect = if u.record.race { u.y_if_treated } else { u.y_if_control };
            prop_assert_eq!(u.record.outcome, expect);
            if tau <= 0.0 {
                prop_assert!(u.y_if_treated <= u.y_if_control);
            }
        }
        let zero = ScmConfig { tau_race: 0.0, ..cfg };
        prop_assert_eq!(scm::true_ate(&scm::generate(&zero).unwrap()).unwrap(), 0.0);
    }
}
