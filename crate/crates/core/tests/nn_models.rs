use hamlet_core::nn::io::{embedding_from_parts, embedding_meta, head_from_net, load_model, save_model};
use hamlet_core::nn::{
    elu, softmax, softmax_cross_entropy, train_cae, train_cnn, ArchConfig, Autoencoder, ConvBlock, Ctx, DenseHead,
    EmbeddingModel, Layer, LayerSpec, Mode, SampleSet, Sequential, Tensor, TrainConfig,
};
use hamlet_core::{rng, Error};
use proptest::prelude::*;
use rand::Rng as _;

fn small_arch(channels: usize, len: usize) -> ArchConfig {
    ArchConfig {
        input_channels: channels,
        input_len: len,
        depthwise_width: 3,
        pointwise_channels: 4,
        blocks: vec![
            ConvBlock {
                channels: 4,
                width: 3,
                stride: 1,
            },
            ConvBlock {
                channels: 4,
                width: 3,
                stride: 1,
            },
        ],
        pool_width: 2,
        pool_stride: 2,
        bn_momentum: 0.9,
        input_scale: 1.0,
    }
}

fn random_rows(n: usize, width: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut r = rng::stream(seed, "rows");
    (0..n)
        .map(|_| (0..width).map(|_| r.random_range(-1.0f32..1.0)).collect())
        .collect()
}

#[test]
fn elu_definition() {
    assert_eq!(elu(0.0), 0.0);
    assert_eq!(elu(2.0), 2.0);
    assert!((elu(-50.0) + 1.0).abs() < 1e-15);
    assert!((elu(-1.0) - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
}

#[test]
fn identity_pointwise_passes_input_through() {
    let mut net = Sequential::from_specs(&[LayerSpec::pointwise(3, 3)], 1).unwrap();
    if let Layer::Conv(c) = &mut net.layers[0] {
        c.weight = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    }
    let x = Tensor::from_vec(&[2, 3, 4], (0..24).map(|v| v as f64 - 7.5).collect()).unwrap();
    assert_eq!(net.infer(&x).unwrap(), x);
}

#[test]
fn three_layer_stack_matches_hand_evaluation() {
    let specs = [
        LayerSpec::Depthwise {
            channels: 2,
            width: 3,
            stride: 1,
            pad: 1,
        },
        LayerSpec::pointwise(2, 3),
        LayerSpec::Elu,
    ];
    let mut net = Sequential::from_specs(&specs, 9).unwrap();
    let mut r = rng::stream(3, "p");
    for (p, _) in net.params_mut() {
        p.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    }
    let x: Vec<f64> = (0..12).map(|_| r.random_range(-2.0..2.0)).collect();
    let (Layer::Depthwise(dw), Layer::Conv(pw)) = (&net.layers[0], &net.layers[1]) else {
        panic!()
    };
    // straight-line re-derivation: x is (1, 2, 6)
    let mut mid = [[0.0f64; 6]; 2];
    for c in 0..2 {
        for t in 0..6 {
            let mut acc = dw.bias[c];
            for k in 0..3 {
                let j = t as isize + k as isize - 1;
                if (0..6).contains(&j) {
                    acc += dw.weight[c * 3 + k] * x[c * 6 + j as usize];
                }
            }
            mid[c][t] = acc;
        }
    }
    let mut expect = vec![];
    for o in 0..3 {
        for t in 0..6 {
            let v = pw.bias[o] + pw.weight[o * 2] * mid[0][t] + pw.weight[o * 2 + 1] * mid[1][t];
            expect.push(if v > 0.0 { v } else { v.exp() - 1.0 });
        }
    }
    let got = net.infer(&Tensor::from_vec(&[1, 2, 6], x).unwrap()).unwrap();
    for (a, b) in got.data().iter().zip(&expect) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn zero_output_weights_give_zero_hidden_bias_gradient() {
    let mut head = DenseHead::new(4, 6, 0.0, 1).unwrap();
    head.weights_mut().2.fill(0.0);
    let x = Tensor::from_vec(&[2, 4], vec![0.5, -1.0, 2.0, 0.1, 1.0, 1.0, -0.3, 0.0]).unwrap();
    let mut ctx = Ctx::train(rng::stream(0, "d"));
    let logits = head.net.train_forward(&x, &mut ctx).unwrap();
    let (_, g) = softmax_cross_entropy(&logits, &[0, 1]).unwrap();
    head.net.backward(&g).unwrap();
    let Layer::Dense(first) = &head.net.layers[0] else {
        panic!()
    };
    assert!(first.grad_bias.iter().all(|v| *v == 0.0));
    assert!(first.grad_weight.iter().all(|v| *v == 0.0));
}

#[test]
fn backward_without_forward_is_usage_error() {
    let mut net = Sequential::from_specs(&[LayerSpec::Dense { inputs: 2, outputs: 2 }], 0).unwrap();
    let err = net.backward(&Tensor::zeros(&[1, 2])).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}

#[test]
fn shape_mismatch_names_the_layer() {
    let net = Sequential::from_specs(&[LayerSpec::pointwise(3, 2)], 0).unwrap();
    match net.infer(&Tensor::zeros(&[1, 4, 5])).unwrap_err() {
        Error::Dimension { layer, .. } => assert_eq!(layer, "pointwise"),
        e => panic!("{e}"),
    }
}

#[test]
fn pool_unpool_round_trip_restores_maxima() {
    let specs = [
        LayerSpec::MaxPool { width: 4, stride: 4 },
        LayerSpec::Unpool { width: 4, stride: 4 },
    ];
    let net = Sequential::from_specs(&specs, 0).unwrap();
    let x = Tensor::from_vec(&[1, 2, 10], (0..20).map(|i| ((i * 7) % 11) as f64).collect()).unwrap();
    let y = net.infer(&x).unwrap();
    assert_eq!(y.shape(), x.shape());
    for r in 0..2 {
        for w in 0..2 {
            let win = &x.data()[r * 10 + w * 4..r * 10 + w * 4 + 4];
            let m = win.iter().copied().fold(f64::MIN, f64::max);
            let pos = win.iter().position(|v| *v == m).unwrap();
            let out = &y.data()[r * 10 + w * 4..r * 10 + w * 4 + 4];
            for (k, v) in out.iter().enumerate() {
                assert_eq!(*v, if k == pos { m } else { 0.0 });
            }
        }
        // trailing samples not covered by a window come back as zero
        assert_eq!(&y.data()[r * 10 + 8..r * 10 + 10], &[0.0, 0.0]);
    }
}

#[test]
fn embedding_is_deterministic_and_batch_invariant() {
    let arch = small_arch(3, 32);
    let model = EmbeddingModel::cnn(&arch, 0.2, 5).unwrap();
    model.check_layout().unwrap();
    let rows = random_rows(6, 96, 1);
    let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
    let set = SampleSet::new(3, 32, refs, vec![]).unwrap();
    let all: Vec<usize> = (0..6).collect();
    let e1 = model.embed(&set.batch(&all, 1.0, None)).unwrap();
    let e2 = model.embed(&set.batch(&all, 1.0, None)).unwrap();
    assert_eq!(e1, e2);
    assert_eq!(e1.shape(), &[6, model.embedding_dim]);
    for i in 0..6 {
        let single = model.embed(&set.batch(&[i], 1.0, None)).unwrap();
        for (a, b) in single.data().iter().zip(e1.row(i)) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn eval_mode_ignores_dropout_and_train_mode_uses_it() {
    let arch = small_arch(2, 16);
    let mut model = EmbeddingModel::cnn(&arch, 0.5, 2).unwrap();
    let x = Tensor::from_vec(&[4, 2, 16], (0..128).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let a = model.net.forward(&x, Mode::Eval, &mut Ctx::eval()).unwrap();
    let b = model.net.forward(&x, Mode::Eval, &mut Ctx::eval()).unwrap();
    assert_eq!(a, b);
    let c = model
        .net
        .forward(&x, Mode::Train, &mut Ctx::train(rng::stream(1, "d")))
        .unwrap();
    let d = model
        .net
        .forward(&x, Mode::Train, &mut Ctx::train(rng::stream(2, "d")))
        .unwrap();
    assert_ne!(c, d);
}

fn toy_two_class(n: usize) -> (Vec<Vec<f32>>, Vec<usize>) {
    let mut r = rng::stream(11, "toy");
    let mut rows = vec![];
    let mut labels = vec![];
    for i in 0..n {
        let y = i % 2;
        let sign = if y == 0 { 1.0 } else { -1.0 };
        let row: Vec<f32> = (0..2 * 16)
            .map(|j| {
                if j < 16 {
                    sign * 1.0 + r.random_range(-0.3f32..0.3)
                } else {
                    r.random_range(-0.3f32..0.3)
                }
            })
            .collect();
        rows.push(row);
        labels.push(y);
    }
    (rows, labels)
}

#[test]
fn separable_toy_reaches_full_train_accuracy() {
    let (rows, labels) = toy_two_class(40);
    let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
    let set = SampleSet::new(2, 16, refs, labels).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 8,
        head_hidden: 16,
        flip_augment: false,
        seed: 3,
        ..Default::default()
    };
    let (trunk, head, history) = train_cnn(&set, None, &small_arch(2, 16), &cfg).unwrap();
    assert_eq!(history.epochs.len(), 50);
    assert!(history.epochs.iter().any(|e| e.train_accuracy == Some(1.0)));
    let p = hamlet_core::nn::classify(&trunk, &head, &set, 16).unwrap();
    let hits = p
        .iter()
        .zip(&set.labels)
        .filter(|(r, &y)| hamlet_core::nn::argmax_row(r) == y)
        .count();
    assert_eq!(hits, 40);
}

#[test]
fn defaults_follow_the_published_settings() {
    let cfg = TrainConfig::default();
    assert_eq!(
        (cfg.epochs, cfg.batch_size, cfg.dropout, cfg.head_hidden),
        (100, 128, 0.2, 1024)
    );
    let arch = ArchConfig::standard(16, 1024);
    assert_eq!(
        arch.blocks.iter().map(|b| b.channels).collect::<Vec<_>>(),
        vec![32, 64, 64]
    );
}

#[test]
fn empty_dataset_is_config_error() {
    let set = SampleSet::new(2, 16, vec![], vec![]).unwrap();
    let err = train_cnn(&set, None, &small_arch(2, 16), &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let err = train_cae(&set, None, &small_arch(2, 16), &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn autoencoder_learns_and_mirrors_shape() {
    let arch = small_arch(2, 32);
    let rows: Vec<Vec<f32>> = (0..48)
        .map(|i| {
            (0..64)
                .map(|j| ((j % 32) as f32 * 0.3 + i as f32).sin() * if j < 32 { 1.0 } else { 0.5 })
                .collect()
        })
        .collect();
    let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
    let train = SampleSet::new(2, 32, refs[..32].to_vec(), vec![]).unwrap();
    let held = SampleSet::new(2, 32, refs[32..].to_vec(), vec![]).unwrap();
    let init = Autoencoder::new(&arch, 4).unwrap();
    let before = hamlet_core::nn::reconstruction_error(&init, &held).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        batch_size: 8,
        flip_augment: false,
        seed: 4,
        adam: hamlet_core::nn::AdamConfig {
            lr: 3e-3,
            ..Default::default()
        },
        ..Default::default()
    };
    let (ae, history) = train_cae(&train, Some(&held), &arch, &cfg).unwrap();
    assert_eq!(history.epochs.len(), 30);
    let after = hamlet_core::nn::reconstruction_error(&ae, &held).unwrap();
    assert!(after < before, "{after} !< {before}");
    let y = ae.reconstruct(&held.batch(&[0, 1], 1.0, None)).unwrap();
    assert_eq!(y.shape(), &[2, 2, 32]);
    let enc = ae.into_encoder();
    assert_eq!(enc.kind, hamlet_core::nn::EmbeddingKind::CaeEncoder);
}

#[test]
fn autoencoder_fixed_point_on_zero_batch() {
    let arch = small_arch(2, 32);
    let zeros = vec![0.0f32; 64];
    let set = SampleSet::new(2, 32, vec![&zeros; 16], vec![]).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        seed: 1,
        ..Default::default()
    };
    let (ae, h) = train_cae(&set, None, &arch, &cfg).unwrap();
    assert!(h.epochs[0].train_loss < 1e-3, "{}", h.epochs[0].train_loss);
    let err = hamlet_core::nn::reconstruction_error(&ae, &set).unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn model_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let arch = small_arch(3, 32);
    let mut model = EmbeddingModel::cnn(&arch, 0.2, 8).unwrap();
    hamlet_core::nn::quantize(&mut model.net);
    let mut head = DenseHead::new(model.embedding_dim, 7, 0.2, 8).unwrap();
    hamlet_core::nn::quantize(&mut head.net);
    save_model(
        dir.path(),
        "cnn",
        embedding_meta(&model),
        &[("trunk", &model.net), ("head", &head.net)],
    )
    .unwrap();
    let mut file = load_model(dir.path()).unwrap();
    assert_eq!(file.kind, "cnn");
    let trunk_net = file.take("trunk").unwrap();
    let back = embedding_from_parts(&file.meta, trunk_net).unwrap();
    let head_back = head_from_net(file.take("head").unwrap()).unwrap();
    let x = Tensor::from_vec(&[2, 3, 32], (0..192).map(|i| (i as f64).cos()).collect()).unwrap();
    assert_eq!(back.embed(&x).unwrap(), model.embed(&x).unwrap());
    let e = model.embed(&x).unwrap();
    assert_eq!(head_back.probs(&e).unwrap(), head.probs(&e).unwrap());
    assert!(matches!(file.take("missing").unwrap_err(), Error::Schema(_)));
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(v in proptest::collection::vec(-50.0f64..50.0, 15)) {
        let p = softmax(&Tensor::from_vec(&[3, 5], v).unwrap()).unwrap();
        for r in p.data().chunks(5) {
            prop_assert!(r.iter().all(|x| *x >= 0.0));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn head_probabilities_sum_to_one(seed in 0u64..1000) {
        let head = DenseHead::new(6, 8, 0.2, seed).unwrap();
        let mut r = rng::stream(seed, "x");
        let x = Tensor::from_vec(&[4, 6], (0..24).map(|_| r.random_range(-3.0..3.0)).collect()).unwrap();
        let p = head.probs(&x).unwrap();
        for row in p.data().chunks(5) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
