mod common;

use proptest::collection::vec;
use proptest::prelude::*;

use streamlda::baselines::PrototypeBuffer;
use streamlda::dataio::{bank_from_csv, bank_read, bank_write, decode_bank, encode_bank, CsvSchema, FeatureBank};
use streamlda::evaluation::{omega_all, topk_accuracy};
use streamlda::numerics::{oas_covariance, precision_residual, shrinkage_precision, Cholesky, ShrinkageConfig, SymMatrix};
use streamlda::orderings::{make_plan, validate_plan, OrderingKind, Span, StreamPlan};
use streamlda::slda::{CovarianceInit, CovarianceMode, SldaModel};

use common::*;

fn stream(max_d: usize, max_k: usize, max_n: usize) -> impl Strategy<Value = (usize, usize, Vec<(Vec<f64>, usize)>)> {
    (1..=max_d, 1..=max_k).prop_flat_map(move |(d, k)| {
        (
            Just(d),
            Just(k),
            vec((vec(-100.0..100.0f64, d), 0..k), 1..=max_n),
        )
    })
}

fn model(d: usize, k: usize, mode: CovarianceMode) -> SldaModel {
    SldaModel::new(d, k, CovarianceInit::Zero, mode, ShrinkageConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn streaming_means_equal_batch_means((d, k, samples) in stream(8, 5, 200)) {
        let mut m = model(d, k, CovarianceMode::Plastic);
        for (z, y) in &samples {
            m.learn(z, *y).unwrap();
        }
        for c in 0..k {
            let rows: Vec<&Vec<f64>> = samples.iter().filter(|s| s.1 == c).map(|s| &s.0).collect();
            prop_assert_eq!(m.class_means().count(c), rows.len() as u64);
            for j in 0..d {
                let batch = if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64 };
                let got = m.class_means().mean(c)[j];
                prop_assert!((got - batch).abs() <= 1e-9 * batch.abs().max(1.0), "class {} dim {}: {} vs {}", c, j, got, batch);
            }
        }
    }

    #[test]
    fn means_invariant_to_order((d, k, samples) in stream(6, 4, 100), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = samples.clone();
        shuffled.shuffle(&mut rng(seed));
        let (mut a, mut b) = (model(d, k, CovarianceMode::Fixed), model(d, k, CovarianceMode::Fixed));
        for (z, y) in &samples { a.learn(z, *y).unwrap(); }
        for (z, y) in &shuffled { b.learn(z, *y).unwrap(); }
        for c in 0..k {
            prop_assert_eq!(a.class_means().count(c), b.class_means().count(c));
            for (x, y) in a.class_means().mean(c).iter().zip(b.class_means().mean(c)) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn fixed_mode_never_touches_sigma((d, k, samples) in stream(6, 4, 60)) {
        let base: Vec<Vec<f64>> = samples.iter().map(|s| s.0.clone()).collect();
        prop_assume!(base.len() >= 2);
        let mut m = SldaModel::new(d, k, CovarianceInit::FromBank(&base), CovarianceMode::Fixed, ShrinkageConfig::default()).unwrap();
        let before = m.covariance().clone();
        for (z, y) in &samples {
            m.learn(z, *y).unwrap();
        }
        prop_assert_eq!(m.covariance(), &before);
    }

    #[test]
    fn identical_prefixes_give_identical_models((d, k, samples) in stream(5, 4, 80), cut in 0usize..80) {
        let cut = cut.min(samples.len());
        let (mut a, mut b) = (model(d, k, CovarianceMode::Plastic), model(d, k, CovarianceMode::Plastic));
        for (z, y) in &samples[..cut] { a.learn(z, *y).unwrap(); }
        for (z, y) in &samples[..cut] { b.learn(z, *y).unwrap(); }
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
        let rest = &samples[cut..];
        for (z, y) in rest { a.learn(z, *y).unwrap(); b.learn(z, *y).unwrap(); }
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn snapshot_round_trip_is_bitwise((d, k, samples) in stream(5, 4, 50)) {
        let mut m = model(d, k, CovarianceMode::Plastic);
        for (z, y) in &samples { m.learn(z, *y).unwrap(); }
        let bytes = m.to_bytes();
        let back = SldaModel::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back.covariance(), m.covariance());
        prop_assert_eq!(back.class_means(), m.class_means());
    }

    #[test]
    fn buffer_invariants(
        cap in 1usize..6,
        inserts in vec((vec(-10.0..10.0f64, 3), 0usize..3), 1..150),
    ) {
        let mut b = PrototypeBuffer::new(cap, 3, 3);
        for (z, y) in &inserts {
            b.insert(z, *y).unwrap();
        }
        for c in 0..3 {
            let rows: Vec<&Vec<f64>> = inserts.iter().filter(|s| s.1 == c).map(|s| &s.0).collect();
            let buf = b.class_buffer(c);
            prop_assert!(buf.len() <= cap);
            prop_assert_eq!(buf.len(), rows.len().min(cap));
            prop_assert_eq!(buf.iter().map(|p| p.count).sum::<u64>(), rows.len() as u64);
            prop_assert!(buf.iter().all(|p| p.label == c));
            if let Some(centroid) = b.centroid(c) {
                for j in 0..3 {
                    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
                    prop_assert!((centroid[j] - mean).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn topk_invariant_to_row_permutation(
        rows in vec((vec(0usize..6, 1..6), 0usize..6), 1..40),
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let (preds, truths): (Vec<Vec<usize>>, Vec<usize>) = rows.iter().cloned().unzip();
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        perm.shuffle(&mut rng(seed));
        let p2: Vec<Vec<usize>> = perm.iter().map(|&i| preds[i].clone()).collect();
        let t2: Vec<usize> = perm.iter().map(|&i| truths[i]).collect();
        let a = topk_accuracy(&preds, &truths, k).unwrap();
        let b = topk_accuracy(&p2, &t2, k).unwrap();
        prop_assert!((a - b).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&a));
        if k > 1 {
            prop_assert!(topk_accuracy(&preds, &truths, k - 1).unwrap() <= a);
        }
    }

    #[test]
    fn omega_is_linear_in_alpha(
        pairs in vec((0.0..1.0f64, 0.01..1.0f64), 1..20),
        c in 0.0..3.0f64,
    ) {
        let (alpha, offline): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let scaled: Vec<f64> = alpha.iter().map(|a| c * a).collect();
        let w = omega_all(&alpha, &offline).unwrap();
        let ws = omega_all(&scaled, &offline).unwrap();
        prop_assert!((ws - c * w).abs() <= 1e-12 * (1.0 + ws.abs()));
        prop_assert!((omega_all(&offline, &offline).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oas_order_invariant_and_psd(seed in any::<u64>(), d in 1usize..8, n in 2usize..30) {
        use rand::seq::SliceRandom;
        let mut r = rng(seed);
        let samples: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut r, d)).collect();
        let mut shuffled = samples.clone();
        shuffled.shuffle(&mut r);
        let a = oas_covariance(&samples).unwrap();
        let b = oas_covariance(&shuffled).unwrap();
        let scale = a.frobenius_norm().max(1.0);
        prop_assert!(max_abs_diff(a.as_slice(), b.as_slice()) <= 1e-12 * scale);
        for _ in 0..8 {
            let x = gaussian_vec(&mut r, d);
            let q: f64 = x.iter().zip(a.mul_vec(&x)).map(|(p, q)| p * q).sum();
            prop_assert!(q >= -1e-10 * scale);
        }
    }

    #[test]
    fn shrinkage_precision_is_spd_inverse(seed in any::<u64>(), d in 1usize..24, rank in 0usize..24, eps_i in 0usize..6) {
        let eps = [1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0][eps_i];
        let sigma = random_psd(&mut rng(seed), d, rank.min(d));
        let cfg = ShrinkageConfig::new(eps).unwrap();
        let p = shrinkage_precision(&sigma, cfg).unwrap();
        prop_assert_eq!(SymMatrix::from_row_major(d, p.as_slice().to_vec()).unwrap(), p.clone());
        prop_assert!(Cholesky::factor(&p).is_ok());
        prop_assert!(precision_residual(&sigma, cfg, &p) < 1e-8);
    }
}

fn synth(seed: u64) -> FeatureBank {
    small_banks(seed).0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn plans_satisfy_their_ordering(seed in any::<u64>(), bank_seed in 0u64..4, kind_i in 0usize..4, base in 0usize..60, every in 1usize..70) {
        let bank = synth(bank_seed);
        let kind = OrderingKind::ALL[kind_i];
        let plan = make_plan(&bank, kind, seed, Span::Samples(base), Span::Samples(every)).unwrap();
        let report = validate_plan(&bank, &plan);
        prop_assert!(report.passed, "{:?}", report.first_violation);
        prop_assert_eq!(plan, make_plan(&bank, kind, seed, Span::Samples(base), Span::Samples(every)).unwrap());
    }

    #[test]
    fn class_spans_satisfy_their_ordering(seed in any::<u64>(), kind_i in 0usize..4, base in 0usize..=5, every in 1usize..=5) {
        let bank = synth(1);
        let kind = OrderingKind::ALL[kind_i];
        let plan = make_plan(&bank, kind, seed, Span::Classes(base), Span::Classes(every)).unwrap();
        let report = validate_plan(&bank, &plan);
        prop_assert!(report.passed, "{:?}", report.first_violation);
        if kind.is_class_ordered() {
            prop_assert_eq!(plan.base_init_len, base * 40);
        }
    }

    #[test]
    fn manifest_round_trip(seed in any::<u64>(), kind_i in 0usize..4) {
        let bank = synth(0);
        let plan = make_plan(&bank, OrderingKind::ALL[kind_i], seed, Span::Samples(20), Span::Samples(50)).unwrap();
        let mut text = Vec::new();
        plan.write_manifest(&mut text).unwrap();
        let back = StreamPlan::read_manifest(text.as_slice()).unwrap();
        prop_assert_eq!(back.order.clone(), plan.order.clone());
        prop_assert_eq!(back, plan);
    }

    #[test]
    fn bank_round_trip_is_bitwise(
        d in 1usize..6,
        rows in vec((vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 5), 0u32..4), 1..40),
        with_names in any::<bool>(),
    ) {
        let features: Vec<f32> = rows.iter().flat_map(|(f, _)| f[..d].to_vec()).collect();
        let labels: Vec<u32> = rows.iter().map(|r| r.1).collect();
        let n = rows.len() as i32;
        let names = with_names.then(|| (0..4).map(|i| format!("class-{i}")).collect());
        let bank = FeatureBank::new(d, 4, features, labels, Some((0..n).collect()), Some(vec![0; n as usize]), names).unwrap();
        let bytes = encode_bank(&bank).unwrap();
        let back = decode_bank(&bytes).unwrap();
        let same_bits = back.features.iter().zip(&bank.features).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits);
        prop_assert_eq!(&back, &bank);
        prop_assert_eq!(encode_bank(&back).unwrap(), bytes);
    }

    #[test]
    fn csv_then_file_round_trip(
        rows in vec((vec(-1e6..1e6f32, 3), 0usize..3), 1..30),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("in.csv");
        let mut text = String::from("label,f0,f1,f2\n");
        for (f, y) in &rows {
            text.push_str(&format!("c{y},{},{},{}\n", f[0], f[1], f[2]));
        }
        std::fs::write(&csv_path, text).unwrap();
        let bank = bank_from_csv(&csv_path, &CsvSchema::default()).unwrap();

        let mut names: Vec<String> = Vec::new();
        let mut labels = Vec::new();
        for (_, y) in &rows {
            let name = format!("c{y}");
            let idx = names.iter().position(|n| *n == name).unwrap_or_else(|| { names.push(name); names.len() - 1 });
            labels.push(idx as u32);
        }
        let features: Vec<f32> = rows.iter().flat_map(|(f, _)| f.clone()).collect();
        let direct = FeatureBank::new(3, names.len(), features, labels, None, None, Some(names)).unwrap();
        prop_assert_eq!(&bank, &direct);

        let bank_path = dir.path().join("out.fbnk");
        bank_write(&bank, &bank_path).unwrap();
        prop_assert_eq!(bank_read(&bank_path).unwrap(), direct);
    }
}

#[test]
fn hundred_seeds_give_distinct_valid_plans() {
    let bank = synth(2);
    for kind in OrderingKind::ALL {
        let mut orders = std::collections::HashSet::new();
        for seed in 0..100 {
            let plan = make_plan(&bank, kind, seed, Span::Samples(0), Span::Samples(25)).unwrap();
            assert!(validate_plan(&bank, &plan).passed);
            orders.insert(plan.order);
        }
        assert_eq!(orders.len(), 100, "{kind}");
    }
}
