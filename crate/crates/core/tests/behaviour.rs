mod common;

use rand::seq::SliceRandom;

use streamlda::baselines::{offline_softmax_fit, ExStream, ExStreamParams, FineTune, OfflineParams, SgdParams, SoftmaxReadout};
use streamlda::dataio::FeatureBank;
use streamlda::evaluation::{evaluate, run_streaming_eval, EvalScope, MetricKind};
use streamlda::learner::{MethodSpec, Predictor};
use streamlda::numerics::{spd_solve, ShrinkageConfig};
use streamlda::orderings::{make_plan, OrderingKind, Span};
use streamlda::slda::{CovarianceInit, CovarianceMode, SldaModel};

use common::*;

#[test]
fn spd_solve_residual_on_random_matrix() {
    let mut r = rng(11);
    for _ in 0..20 {
        let a = random_spd(&mut r, 5, 0.5);
        let b = gaussian_vec(&mut r, 5);
        let x = spd_solve(&a, &b).unwrap();
        let ax = a.mul_vec(&x);
        let res = max_abs_diff(&ax, &b) / b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(res < 1e-10, "residual {res}");
    }
}

#[test]
fn softmax_gradient_matches_central_differences() {
    let mut r = rng(5);
    let (d, k) = (4, 3);
    let params = SgdParams {
        weight_decay: 1e-2,
        ..SgdParams::default()
    };
    let mut model = SoftmaxReadout::new(d, k, params);
    model.weights = gaussian_vec(&mut r, d * k);
    model.bias = gaussian_vec(&mut r, k);
    let xs: Vec<Vec<f64>> = (0..6).map(|_| gaussian_vec(&mut r, d)).collect();
    let batch: Vec<(&[f64], usize)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), i % k)).collect();
    let g = model.gradient(&batch).unwrap();
    let h = 1e-6;
    for i in 0..d * k {
        let (mut p, mut m) = (model.clone(), model.clone());
        p.weights[i] += h;
        m.weights[i] -= h;
        let fd = (p.objective(&batch).unwrap() - m.objective(&batch).unwrap()) / (2.0 * h);
        assert!((fd - g.weights[i]).abs() < 1e-7, "w[{i}]: {fd} vs {}", g.weights[i]);
    }
    for i in 0..k {
        let (mut p, mut m) = (model.clone(), model.clone());
        p.bias[i] += h;
        m.bias[i] -= h;
        let fd = (p.objective(&batch).unwrap() - m.objective(&batch).unwrap()) / (2.0 * h);
        assert!((fd - g.bias[i]).abs() < 1e-7, "b[{i}]: {fd} vs {}", g.bias[i]);
    }
}

#[test]
fn exstream_buffer_loss_decreases() {
    let (train, _) = small_banks(3);
    let mut ex = ExStream::new(train.dim, train.num_classes, ExStreamParams::default(), 0).unwrap();
    for i in 0..train.len() {
        ex.buffer.insert(&train.row_f64(i), train.label(i)).unwrap();
    }
    let protos: Vec<(Vec<f64>, usize)> = ex.buffer.iter().map(|p| (p.vector.clone(), p.label)).collect();
    let batch: Vec<(&[f64], usize)> = protos.iter().map(|(v, y)| (v.as_slice(), *y)).collect();
    let start = ex.readout.objective(&batch).unwrap();
    for _ in 0..50 {
        ex.readout.sgd_step(&batch).unwrap();
    }
    let end = ex.readout.objective(&batch).unwrap();
    assert!(end < start, "{start} -> {end}");
}

/// Two well-separated classes, streamed class by class.
fn two_blobs() -> (FeatureBank, Vec<Vec<f64>>) {
    let mut r = rng(8);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (y, centre) in [(0u32, [3.0, 0.0]), (1, [-3.0, 0.0])] {
        for _ in 0..200 {
            let g = gaussian_vec(&mut r, 2);
            features.push((centre[0] + 0.5 * g[0]) as f32);
            features.push((centre[1] + 0.5 * g[1]) as f32);
            labels.push(y);
        }
    }
    let bank = FeatureBank::new(2, 2, features, labels, None, None, None).unwrap();
    let test: Vec<Vec<f64>> = (0..50).map(|_| {
        let g = gaussian_vec(&mut r, 2);
        vec![3.0 + 0.5 * g[0], 0.5 * g[1]]
    }).collect();
    (bank, test)
}

#[test]
fn finetune_forgets_the_first_class() {
    let (train, test) = benchmark_banks();
    let plan = make_plan(&train, OrderingKind::ClassIid, 7, Span::Samples(0), Span::Samples(1)).unwrap();
    let first = train.label(plan.order[0]);
    let block = plan.order.iter().take_while(|&&i| train.label(i) == first).count();
    let first_rows: Vec<Vec<f64>> = (0..test.len()).filter(|&i| test.label(i) == first).map(|i| test.row_f64(i)).collect();
    let accuracy = |ft: &FineTune| {
        first_rows.iter().filter(|z| ft.readout.predict(z, 1)[0].label == first).count() as f64 / first_rows.len() as f64
    };

    let mut ft = FineTune::new(train.dim, train.num_classes, SgdParams::default());
    for &i in &plan.order[..block] {
        ft.learn(&train.row_f64(i), train.label(i)).unwrap();
    }
    let before = accuracy(&ft);
    for &i in &plan.order[block..] {
        ft.learn(&train.row_f64(i), train.label(i)).unwrap();
    }
    let after = accuracy(&ft);
    assert!(before - after >= 0.3, "first-class accuracy {before} -> {after}");

    let mut slda = SldaModel::new(train.dim, train.num_classes, CovarianceInit::Zero, CovarianceMode::Plastic, ShrinkageConfig::default()).unwrap();
    for &i in &plan.order {
        slda.learn(&train.row_f64(i), train.label(i)).unwrap();
    }
    let kept = first_rows.iter().filter(|z| slda.predict(z, 1).unwrap()[0].label == first).count() as f64;
    let slda_after = kept / first_rows.len() as f64;
    assert!(slda_after > after, "slda {slda_after} vs finetune {after}");
}

#[test]
fn offline_fit_separable_and_degenerate() {
    let (bank, _) = two_blobs();
    let fit = offline_softmax_fit(&bank, &OfflineParams::default(), 1).unwrap();
    let hits = (0..bank.len()).filter(|&i| fit.predict(&bank.row_f64(i), 1)[0].label == bank.label(i)).count();
    assert_eq!(hits, bank.len());
    assert_eq!(fit, offline_softmax_fit(&bank, &OfflineParams::default(), 1).unwrap());

    let none = OfflineParams { epochs: 0, ..OfflineParams::default() };
    let zero = offline_softmax_fit(&bank, &none, 1).unwrap();
    assert!(zero.weights.iter().chain(&zero.bias).all(|&v| v == 0.0));
}

#[test]
fn snapshots_are_isolated_from_later_learning() {
    let (train, test) = small_banks(4);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng(1));
    let specs = [
        MethodSpec::Slda { name: "p".into(), mode: CovarianceMode::Plastic, epsilon: 1e-4, cov_init: streamlda::learner::CovInitKind::Zero },
        MethodSpec::Finetune { name: "f".into(), sgd: SgdParams::default(), base: OfflineParams::default() },
        MethodSpec::Exstream { name: "e".into(), params: ExStreamParams::default(), base: OfflineParams::default() },
        MethodSpec::Ncm { name: "n".into() },
    ];
    for spec in specs {
        let mut learner = spec.build(train.dim, train.num_classes, &[], 0).unwrap();
        for &i in &order[..100] {
            learner.learn(&train.row_f64(i), train.label(i)).unwrap();
        }
        let snap = learner.snapshot().unwrap();
        let ranks = |p: &dyn Predictor| (0..test.len()).map(|i| p.rank(&test.row_f64(i), 3)).collect::<Vec<_>>();
        let before = ranks(snap.as_ref());
        for &i in &order[100..] {
            learner.learn(&train.row_f64(i), train.label(i)).unwrap();
        }
        assert_eq!(ranks(snap.as_ref()), before, "{}", spec.name());
    }
}

#[test]
fn slda_beats_chance_on_instance_ordering() {
    let (train, test) = small_banks(6);
    let plan = make_plan(&train, OrderingKind::ClassInstance, 3, Span::Classes(1), Span::Classes(1)).unwrap();
    let base: Vec<Vec<f64>> = plan.order[..plan.base_init_len].iter().map(|&i| train.row_f64(i)).collect();
    let spec = MethodSpec::Slda { name: "s".into(), mode: CovarianceMode::Plastic, epsilon: 1e-4, cov_init: streamlda::learner::CovInitKind::Oas };
    let mut learner = spec.build(train.dim, train.num_classes, &base, 3).unwrap();
    let run = run_streaming_eval(&train, &test, &plan, learner.as_mut(), MetricKind::Top1, EvalScope::SeenClassesOnly).unwrap();
    assert_eq!(run.curve.positions(), vec![40, 80, 120, 160, 200]);
    let acc = run.curve.accuracies();
    assert!(*acc.last().unwrap() > 0.9, "{acc:?}");
    // Seen-only scope restricted to the first class is trivially perfect.
    assert_eq!(acc[0], 1.0);
    let snap = learner.snapshot().unwrap();
    assert_eq!(evaluate(snap.as_ref(), &test, MetricKind::Top5, None), 1.0);
}
