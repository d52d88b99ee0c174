use binbrain::data::{render_synthetic, ChannelStats, Dataset};
use binbrain::error::Error;
use binbrain::eval::{evaluate, normalize_channel, row_normalize, ConfusionMatrix, RECORDS_HEADER};
use binbrain::layers::{log_softmax, Mode};
use binbrain::model::{build_mini_resnet18, default_labels, Model, ParamStore};
use binbrain::train::{
    adam_step, detect_saturation, epoch_batches, measure, nll_loss, train, AdamConfig, AdamState, TrainConfig,
    REPORT_HEADER,
};
use binbrain::{Graph, Tensor};
use proptest::prelude::*;

fn tiny_dataset(size: usize, per_class: usize, seed: u64) -> Dataset {
    let items = (0..4).flat_map(|label| {
        (0..per_class).map(move |i| (format!("{label}_{i}"), label, render_synthetic(label, i, size, seed)))
    });
    Dataset::from_images(size, items)
}

fn bits(m: &Model) -> Vec<Vec<u64>> {
    m.params().iter().map(|p| p.tensor.data().iter().map(|v| v.to_bits()).collect()).collect()
}

// Direct reading of the saturation definition: the first epoch e after which
// none of the next `patience` epochs beat the running best by `delta`.
fn saturation_oracle(series: &[f64], delta: f64, patience: usize) -> Option<usize> {
    for e in 0..series.len() {
        if e + patience >= series.len() {
            return None;
        }
        let best = series[..=e].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut running = best;
        let mut improved = false;
        for &v in &series[e + 1..=e + patience] {
            if v - running >= delta {
                improved = true;
            }
            running = running.max(v);
        }
        if !improved {
            return Some(e + 1);
        }
    }
    None
}

proptest! {
    #[test]
    fn nll_matches_direct_summation(
        n in 1usize..8,
        k in 2usize..6,
        raw in prop::collection::vec(-5.0f64..5.0, 48),
        picks in prop::collection::vec(0usize..100, 8),
    ) {
        let logits = Tensor::new(vec![n, k], raw[..n * k].to_vec()).unwrap();
        let targets: Vec<usize> = picks[..n].iter().map(|p| p % k).collect();
        let mut g = Graph::new();
        let x = g.constant(logits.clone());
        let lp = log_softmax(&mut g, x).unwrap();
        let loss = nll_loss(&mut g, lp, &targets).unwrap();
        let got = g.value(loss).item().unwrap();

        let mut expected = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let row = &logits.data()[i * k..(i + 1) * k];
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
            expected -= row[t] - lse;
        }
        expected /= n as f64;
        prop_assert!((got - expected).abs() < 1e-12, "{} vs {}", got, expected);
    }

    #[test]
    fn nll_of_log_softmax_gradient_is_softmax_minus_one_hot(
        n in 1usize..6,
        k in 2usize..6,
        raw in prop::collection::vec(-4.0f64..4.0, 36),
        picks in prop::collection::vec(0usize..100, 6),
    ) {
        let logits = Tensor::new(vec![n, k], raw[..n * k].to_vec()).unwrap();
        let targets: Vec<usize> = picks[..n].iter().map(|p| p % k).collect();
        let mut g = Graph::new();
        let x = g.parameter(logits.clone());
        let lp = log_softmax(&mut g, x).unwrap();
        let loss = nll_loss(&mut g, lp, &targets).unwrap();
        let grads = g.backward(loss).unwrap();
        let dx = grads.get(x).unwrap();
        for i in 0..n {
            let row = &logits.data()[i * k..(i + 1) * k];
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            for j in 0..k {
                let expected = (row[j].exp() / z - f64::from(u8::from(j == targets[i]))) / n as f64;
                prop_assert!((dx[i * k + j] - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn adam_state_invariants(
        steps in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..20),
        frozen in any::<bool>(),
    ) {
        let mut store = ParamStore::new();
        store.push("a", Tensor::from_vec(vec![0.5, -0.25, 2.0]).unwrap(), true);
        store.push("b", Tensor::from_vec(vec![1.0, 1.0, 1.0]).unwrap(), !frozen);
        let frozen_before = store.get("b").unwrap().tensor.clone();
        let mut state = AdamState::new(&store);
        for (i, g) in steps.iter().enumerate() {
            for p in store.iter_mut() {
                p.tensor.zero_grad();
                p.tensor.accumulate_grad(g).unwrap();
            }
            adam_step(&mut store, &mut state, &AdamConfig::default()).unwrap();
            prop_assert_eq!(state.t, i as u64 + 1);
            for (j, p) in store.iter().enumerate() {
                prop_assert_eq!(state.m[j].len(), p.tensor.numel());
                prop_assert_eq!(state.v[j].len(), p.tensor.numel());
                prop_assert!(state.v[j].iter().all(|&v| v >= 0.0));
            }
        }
        if frozen {
            prop_assert_eq!(store.get("b").unwrap().tensor.data(), frozen_before.data());
            prop_assert!(state.m[1].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn increasing_series_never_saturates(steps in prop::collection::vec(0.002f64..0.1, 1..30), patience in 1usize..5) {
        let mut acc = 0.0;
        let series: Vec<f64> = steps.iter().map(|s| { acc += s; acc }).collect();
        prop_assert_eq!(detect_saturation(&series, 0.001, patience), None);
    }

    #[test]
    fn saturation_agrees_with_definition(
        series in prop::collection::vec(0.0f64..1.0, 1..30),
        delta in prop_oneof![Just(0.0), 0.0f64..0.2],
        patience in 1usize..6,
    ) {
        prop_assert_eq!(detect_saturation(&series, delta, patience), saturation_oracle(&series, delta, patience));
    }

    #[test]
    fn confusion_accuracy_is_trace_over_total(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200),
    ) {
        let mut cm = ConfusionMatrix::new(&default_labels(4));
        for &(t, p) in &pairs {
            cm.record(t, p);
        }
        let hits = pairs.iter().filter(|(t, p)| t == p).count();
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        prop_assert_eq!(cm.trace(), hits as u64);
        prop_assert_eq!(cm.accuracy(), hits as f64 / pairs.len() as f64);
    }

    #[test]
    fn merge_is_order_independent(
        a in prop::collection::vec((0usize..4, 0usize..4), 0..50),
        b in prop::collection::vec((0usize..4, 0usize..4), 0..50),
    ) {
        let labels = default_labels(4);
        let fill = |pairs: &[(usize, usize)]| {
            let mut cm = ConfusionMatrix::new(&labels);
            pairs.iter().for_each(|&(t, p)| cm.record(t, p));
            cm
        };
        let (mut ab, mut ba) = (fill(&a), fill(&b));
        ab.merge(&fill(&b));
        ba.merge(&fill(&a));
        let all: Vec<_> = a.iter().chain(&b).copied().collect();
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(&ab, &fill(&all));
    }

    #[test]
    fn row_normalize_is_scale_invariant(
        counts in prop::collection::vec(prop::collection::vec(0u64..500, 4), 4),
        k in 1u64..50,
    ) {
        let counts: Vec<Vec<u64>> = counts.into_iter().map(|mut r| { r[0] += 1; r }).collect();
        let labels = default_labels(4);
        let cm = ConfusionMatrix::from_counts(&labels, counts.clone()).unwrap();
        let scaled = ConfusionMatrix::from_counts(&labels, counts.iter().map(|r| r.iter().map(|c| c * k).collect()).collect()).unwrap();
        let pct = row_normalize(&cm).unwrap();
        prop_assert_eq!(&pct, &row_normalize(&scaled).unwrap());
        for row in &pct {
            // independent half-up rounding can drift by at most 0.05 per cell
            prop_assert!((row.iter().sum::<f64>() - 100.0).abs() <= 0.05 * row.len() as f64 + 1e-9);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn feature_normalization_is_affine_invariant(
        values in prop::collection::vec(-100.0f64..100.0, 2..64),
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let a = normalize_channel(&values);
        let b = normalize_channel(&values.iter().map(|v| v * scale + shift).collect::<Vec<_>>());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((0.0..=1.0).contains(x));
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn saturation_examples() {
    let series = [0.5, 0.6, 0.7, 0.8, 0.85, 0.87, 0.878, 0.878, 0.877, 0.878];
    assert_eq!(detect_saturation(&series, 0.001, 3), Some(7));
    assert_eq!(saturation_oracle(&series, 0.001, 3), Some(7));
    assert_eq!(detect_saturation(&[0.4; 6], 0.001, 1), Some(1));
    assert_eq!(detect_saturation(&[0.1, 0.2, 0.3, 0.4], 0.001, 2), None);
}

#[test]
fn config_preconditions() {
    let bad = [
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { batch_size: 0, ..TrainConfig::default() },
        TrainConfig { adam: AdamConfig { learning_rate: 0.0, ..AdamConfig::default() }, ..TrainConfig::default() },
        TrainConfig { adam: AdamConfig { beta1: 1.0, ..AdamConfig::default() }, ..TrainConfig::default() },
        TrainConfig { adam: AdamConfig { beta2: 0.0, ..AdamConfig::default() }, ..TrainConfig::default() },
    ];
    for c in bad {
        assert!(matches!(c.validate(), Err(Error::InvalidArgument(_))), "{c:?}");
    }
    assert!(TrainConfig::default().validate().is_ok());
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let data = tiny_dataset(32, 2, 3);
    let stats = ChannelStats::IDENTITY;
    let mut model = build_mini_resnet18(4, 32, 4, 8).unwrap();
    let before = bits(&model);
    let adam = AdamConfig { learning_rate: 0.0, ..AdamConfig::default() };
    let mut state = AdamState::new(model.params());
    let mut losses = Vec::new();
    for epoch in 0..3 {
        for idx in epoch_batches(data.len(), 3, 1, epoch) {
            let (x, targets) = data.batch(&idx, &stats, None).unwrap();
            let mut g = Graph::new();
            let input = g.constant(x);
            let pass = model.forward(&mut g, input, Mode::Eval).unwrap();
            let loss = nll_loss(&mut g, pass.output, &targets).unwrap();
            let grads = g.backward(loss).unwrap();
            model.zero_grads();
            model.accumulate_grads(&pass, &grads).unwrap();
            adam_step(model.params_mut(), &mut state, &adam).unwrap();
        }
        losses.push(measure(&model, &data, &stats, 4).unwrap().0.to_bits());
    }
    assert!(state.t > 0);
    assert_eq!(bits(&model), before);
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "{losses:?}");
}

#[test]
fn identical_runs_give_identical_reports() {
    let train_set = tiny_dataset(32, 3, 4);
    let val_set = tiny_dataset(32, 1, 5);
    let stats = ChannelStats::new([0.3, 0.3, 0.3], [0.2, 0.2, 0.2]).unwrap();
    let config = TrainConfig {
        epochs: 3,
        batch_size: 4,
        seed: 12,
        augment: Some(binbrain::data::AugmentPolicy { seed: 12, ..Default::default() }),
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = build_mini_resnet18(4, 32, 4, 12).unwrap();
        let report = train(&mut m, &train_set, &val_set, &stats, &config).unwrap();
        (report, bits(&m))
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a.deterministic_csv(), b.deterministic_csv());
    assert_eq!(ma, mb);
    assert_eq!(a.epochs.len(), 3);
    for e in &a.epochs {
        assert!((0.0..=1.0).contains(&e.train_accuracy) && (0.0..=1.0).contains(&e.val_accuracy));
        assert!(e.train_loss.is_finite() && e.val_loss.is_finite());
    }
    let csv = a.to_csv();
    assert_eq!(csv.lines().next(), Some(REPORT_HEADER));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn training_rejects_mismatched_data() {
    let mut m = build_mini_resnet18(4, 32, 4, 0).unwrap();
    let empty = Dataset { size: 32, samples: Vec::new() };
    let data = tiny_dataset(32, 1, 0);
    let stats = ChannelStats::IDENTITY;
    let config = TrainConfig { epochs: 1, ..TrainConfig::default() };
    assert!(matches!(train(&mut m, &empty, &data, &stats, &config), Err(Error::EmptyDataset)));
    let wrong_size = tiny_dataset(64, 1, 0);
    assert!(matches!(train(&mut m, &wrong_size, &data, &stats, &config), Err(Error::SizeMismatch { .. })));
    let mut three = build_mini_resnet18(4, 32, 3, 0).unwrap();
    assert!(matches!(train(&mut three, &data, &data, &stats, &config), Err(Error::TargetOutOfRange { .. })));
}

#[test]
fn evaluation_counts_every_sample() {
    let data = tiny_dataset(32, 2, 6);
    let m = build_mini_resnet18(4, 32, 4, 2).unwrap();
    let ev = evaluate(&m, &data, &ChannelStats::IDENTITY, 3).unwrap();
    assert_eq!(ev.confusion.total(), data.len() as u64);
    assert_eq!(ev.records.len(), data.len());
    assert_eq!(ev.accuracy, ev.confusion.trace() as f64 / data.len() as f64);
    assert_eq!(ev.misclassified().count() as u64, ev.confusion.total() - ev.confusion.trace());
    for r in &ev.records {
        assert!(r.confidence > 0.0 && r.confidence <= 1.0);
    }
    let csv = ev.records_csv();
    assert_eq!(csv.lines().next(), Some(RECORDS_HEADER));
    assert_eq!(csv.lines().count(), data.len() + 1);

    let dir = tempfile::tempdir().unwrap();
    let single = Dataset { size: 32, samples: data.samples[..1].to_vec() };
    let one = evaluate(&m, &single, &ChannelStats::IDENTITY, 1).unwrap();
    assert!(one.accuracy == 0.0 || one.accuracy == 1.0);
    assert_eq!(one.confusion.counts().iter().flatten().filter(|&&c| c > 0).count(), 1);
    ev.write(dir.path()).unwrap_or(());

    let empty = Dataset { size: 32, samples: Vec::new() };
    assert!(matches!(evaluate(&m, &empty, &ChannelStats::IDENTITY, 1), Err(Error::EmptyDataset)));
}
