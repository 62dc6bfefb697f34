use arelu_core::gradcheck::{relative_error, DEFAULT_H};
use arelu_core::layers::Init;
use arelu_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_spec(kind: ActivationKind) -> MnistConvSpec {
    MnistConvSpec {
        activation: kind,
        widths: [3, 4, 5],
        input_hw: (8, 8),
        ..MnistConvSpec::new(kind)
    }
}

fn random_batch<T: Real>(n: usize, hw: (usize, usize), seed: u64) -> (Tensor<T>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * hw.0 * hw.1)
        .map(|_| rng.random_range(0.0..1.0))
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..10)).collect();
    (
        Tensor::from_f64(&[n, 1, hw.0, hw.1], &data).unwrap(),
        labels,
    )
}

fn loss_at(model: &mut SequentialModel<f64>, x: &Tensor<f64>, y: &[usize]) -> f64 {
    let (l, _) = model.forward_loss(x, y).unwrap();
    model.clear_contexts();
    l
}

#[test]
fn input_gradient_matches_finite_differences() {
    for kind in [
        ActivationKind::AReLU,
        ActivationKind::ReLU,
        ActivationKind::Selu,
    ] {
        let mut model = build_mnist_conv::<f64>(&small_spec(kind), 11).unwrap();
        let (x, y) = random_batch::<f64>(2, (8, 8), 5);
        model.forward_loss(&x, &y).unwrap();
        let dx = model.backward_with_input_grad().unwrap();
        let mut worst = 0.0f64;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += DEFAULT_H;
            let mut xm = x.clone();
            xm.data_mut()[i] -= DEFAULT_H;
            let num =
                (loss_at(&mut model, &xp, &y) - loss_at(&mut model, &xm, &y)) / (2.0 * DEFAULT_H);
            worst = worst.max(relative_error(dx.data()[i], num));
        }
        assert!(worst < 1e-4, "{kind}: worst relative error {worst:e}");
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut model = build_mnist_conv::<f64>(&small_spec(ActivationKind::AReLU), 3).unwrap();
    let (x, y) = random_batch::<f64>(2, (8, 8), 8);
    model.zero_grads();
    model.forward_loss(&x, &y).unwrap();
    model.backward().unwrap();
    let analytic: Vec<(String, Vec<f64>)> = model
        .params_mut()
        .iter()
        .map(|p| (p.name.clone(), p.grad.to_vec()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for _ in 0..3 {
            let i = rng.random_range(0..grads.len());
            let nudge =
                |model: &mut SequentialModel<f64>, d: f64| model.params_mut()[pi].value[i] += d;
            nudge(&mut model, DEFAULT_H);
            let plus = loss_at(&mut model, &x, &y);
            nudge(&mut model, -2.0 * DEFAULT_H);
            let minus = loss_at(&mut model, &x, &y);
            nudge(&mut model, DEFAULT_H);
            let num = (plus - minus) / (2.0 * DEFAULT_H);
            let rel = relative_error(grads[i], num);
            assert!(
                rel < 1e-4,
                "{name}[{i}]: analytic {} numeric {num} rel {rel:e}",
                grads[i]
            );
        }
    }
}

#[test]
fn zero_weights_give_uniform_loss() {
    let spec = MnistConvSpec {
        init: Init::Zeros,
        ..MnistConvSpec::default()
    };
    let mut model = build_mnist_conv::<f64>(&spec, 0).unwrap();
    let (x, y) = random_batch::<f64>(4, (28, 28), 2);
    let (loss, _) = model.forward_loss(&x, &y).unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-12, "{loss}");
}

#[test]
fn zero_images_with_zero_weights_give_zero_conv_gradients() {
    let spec = MnistConvSpec {
        init: Init::Zeros,
        ..MnistConvSpec::default()
    };
    let mut model = build_mnist_conv::<f64>(&spec, 0).unwrap();
    let x = Tensor::<f64>::zeros(&[3, 1, 28, 28]).unwrap();
    model.forward_loss(&x, &[1, 2, 3]).unwrap();
    model.backward().unwrap();
    for p in model.params_mut() {
        if p.name.starts_with("conv") && p.name.ends_with("weight") {
            assert!(p.grad.iter().all(|&g| g == 0.0), "{}", p.name);
        }
    }
}

#[test]
fn loss_is_a_mean_over_the_batch() {
    let mut model = build_mnist_conv::<f64>(&MnistConvSpec::default(), 4).unwrap();
    let (x1, y1) = random_batch::<f64>(1, (28, 28), 9);
    let repeated: Vec<f64> = x1
        .data()
        .iter()
        .copied()
        .cycle()
        .take(8 * x1.len())
        .collect();
    let x8 = Tensor::from_vec(&[8, 1, 28, 28], repeated).unwrap();
    let l1 = loss_at(&mut model, &x1, &y1);
    let l8 = loss_at(&mut model, &x8, &[y1[0]; 8]);
    assert!(l1 >= 0.0 && l1.is_finite());
    assert!((l1 - l8).abs() < 1e-12, "{l1} vs {l8}");
}

#[test]
fn predictions_do_not_depend_on_batch_composition() {
    let mut model = build_mnist_conv::<f32>(&MnistConvSpec::default(), 4).unwrap();
    let (x, _) = random_batch::<f32>(6, (28, 28), 3);
    let all = model.predict(&x).unwrap();
    let plane = 28 * 28;
    for (image, &want) in x.data().chunks(plane).zip(&all) {
        let xi = Tensor::from_vec(&[1, 1, 28, 28], image.to_vec()).unwrap();
        assert_eq!(model.predict(&xi).unwrap()[0], want);
    }
}

#[test]
fn one_small_sgd_step_lowers_batch_loss() {
    let mut failures = 0;
    for seed in 0..20 {
        let mut model = build_mnist_conv::<f64>(&MnistConvSpec::default(), seed).unwrap();
        let mut opt = Optimizer::<f64>::new(OptimConfig::sgd(1e-3, 0.0)).unwrap();
        let (x, y) = random_batch::<f64>(16, (28, 28), 100 + seed);
        model.zero_grads();
        let (before, _) = model.forward_loss(&x, &y).unwrap();
        model.backward().unwrap();
        opt.step(&mut model.params_mut()).unwrap();
        let after = loss_at(&mut model, &x, &y);
        if after >= before {
            failures += 1;
        }
    }
    assert!(failures <= 1, "{failures} seeds did not decrease the loss");
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut model = build_mnist_conv::<f32>(&MnistConvSpec::default(), 1).unwrap();
    let mut opt = Optimizer::<f32>::new(OptimConfig::adam(1e-3)).unwrap();
    let (x, y) = random_batch::<f32>(8, (28, 28), 4);
    for _ in 0..3 {
        model.zero_grads();
        model.forward_loss(&x, &y).unwrap();
        model.backward().unwrap();
        opt.step(&mut model.params_mut()).unwrap();
    }
    model.clear_contexts();
    model.save_checkpoint(&path).unwrap();

    let mut other = build_mnist_conv::<f32>(&MnistConvSpec::default(), 99).unwrap();
    other.load_checkpoint(&path).unwrap();
    let a = model.forward(&x, Mode::Eval, false).unwrap();
    let b = other.forward(&x, Mode::Eval, false).unwrap();
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(model.arelu_params(), other.arelu_params());

    let raw = std::fs::read(&path).unwrap();
    assert_eq!(&raw[..4], b"ARLU");
    assert_eq!(u32::from_le_bytes(raw[4..8].try_into().unwrap()), 1);
}

#[test]
fn checkpoint_into_mismatched_architecture_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut model = build_mnist_conv::<f32>(&MnistConvSpec::default(), 1).unwrap();
    model.save_checkpoint(&path).unwrap();
    let narrow = MnistConvSpec {
        widths: [8, 8, 8],
        ..MnistConvSpec::default()
    };
    let mut other = build_mnist_conv::<f32>(&narrow, 1).unwrap();
    assert!(other.load_checkpoint(&path).is_err());
    let mut relu = build_mnist_conv::<f32>(&MnistConvSpec::new(ActivationKind::ReLU), 1).unwrap();
    assert!(relu.load_checkpoint(&path).is_err());
}

#[test]
fn alpha_stays_clamped_under_aggressive_training() {
    let mut model = build_mnist_conv::<f32>(&small_spec(ActivationKind::AReLU), 2).unwrap();
    let mut opt = Optimizer::<f32>::new(OptimConfig::sgd(0.5, 0.9)).unwrap();
    for step in 0..30 {
        let (x, y) = random_batch::<f32>(4, (8, 8), step);
        model.zero_grads();
        let (loss, _) = model.forward_loss(&x, &y).unwrap();
        if !loss.is_finite() {
            break;
        }
        model.backward().unwrap();
        if opt.step(&mut model.params_mut()).is_err() {
            break;
        }
        for (alpha, _) in model.arelu_params() {
            assert!((0.01..=0.99).contains(&alpha), "alpha {alpha}");
        }
    }
}
