use deeppcanet::dataset::{generate_toy_dataset, LabeledImage};
use deeppcanet::image::Image;
use deeppcanet::netbuilder::{
    attach_head, count_complexity, grow_architecture, grow_network, load_arch, GrowOptions, LayerSpec, FIRST_KERNEL,
};
use deeppcanet::nn::{BatchNorm, BodyLayer, Mode, Tensor};
use deeppcanet::pca_kernels::{derive_kernel_bank, extract_blocks};
use deeppcanet::representatives::{select_representatives, RepresentativeSet};
use deeppcanet::rng::seeded;
use std::collections::BTreeMap;

fn toy_reps(seed: u64) -> RepresentativeSet {
    let data = generate_toy_dataset(10, 3, 32, &mut seeded(seed)).unwrap();
    select_representatives(&data, &mut seeded(seed + 1)).unwrap()
}

#[test]
fn growth_is_deterministic() {
    let reps = toy_reps(5);
    let a = grow_architecture(&reps, 0.99).unwrap();
    let b = grow_architecture(&reps, 0.99).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn first_block_width_matches_its_kernel_bank() {
    let reps = toy_reps(7);
    let model = grow_network(&reps, 0.99, &GrowOptions::default()).unwrap();
    let x = Tensor::from_images(&reps.images).unwrap();
    let patches = extract_blocks(&x, FIRST_KERNEL, FIRST_KERNEL).unwrap();
    let bank = derive_kernel_bank(&patches, 0.99).unwrap();
    let first = model.conv_blocks().next().unwrap();
    assert_eq!(first.conv.out_channels, bank.len());
    for (j, k) in bank.kernels.iter().enumerate() {
        assert_eq!(&first.conv.kernel(j), k);
    }
}

#[test]
fn block_order_and_kernel_sizes() {
    let arch = grow_architecture(&toy_reps(9), 0.99).unwrap();
    let sizes: Vec<usize> = arch
        .layers
        .iter()
        .filter_map(|l| match l {
            LayerSpec::ConvBlock { kernel_size, .. } => Some(*kernel_size),
            _ => None,
        })
        .collect();
    assert_eq!(sizes[0], 7);
    assert!(sizes[1..].iter().all(|&k| k == 3));
    assert!(arch.layers.get(1).is_none_or(|l| matches!(l, LayerSpec::Maxpool { .. })));
}

#[test]
fn identical_classes_stop_at_depth_one() {
    // both classes hold the same images, so no block can separate them
    let data = generate_toy_dataset(3, 2, 32, &mut seeded(2)).unwrap();
    let mut images: Vec<LabeledImage> = Vec::new();
    for class in 0..2 {
        for (i, img) in data.items().iter().filter(|it| it.grade == 0).enumerate() {
            images.push(LabeledImage::new(img.pixels.clone(), class, format!("c{class}_{i}")).unwrap());
        }
    }
    let reps = RepresentativeSet {
        per_class_counts: BTreeMap::from([(0, 3), (1, 3)]),
        images,
        num_classes: 2,
        gap_reports: BTreeMap::new(),
    };
    let arch = grow_architecture(&reps, 0.99).unwrap();
    assert_eq!(arch.depth(), 1, "{:?}", arch.trace_history);
    assert!(arch.trace_history.iter().all(|&(_, t)| t == 0.0));
    assert_eq!(arch.layers.len(), 2);
}

#[test]
fn body_bn_holds_batch_statistics() {
    let reps = toy_reps(11);
    let model = grow_network(&reps, 0.99, &GrowOptions::default()).unwrap();
    let x = Tensor::from_images(&reps.images).unwrap();
    let (mean, var) = BatchNorm::batch_statistics(&x);
    let BodyLayer::Conv(first) = &model.body()[0] else { panic!("body starts with a conv block") };
    assert_eq!(first.bn.running_mean, mean);
    assert_eq!(first.bn.running_var, var);
    let head = attach_head(&model, 0.25, &mut seeded(1)).unwrap();
    let p = head.forward(&x, Mode::Eval, None).unwrap().probs;
    for i in 0..p.batch() {
        assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn too_small_input_is_an_error() {
    let img = Image::from_fn(6, 6, 1, |y, x, _| ((y + x) % 2) as f64);
    let reps = RepresentativeSet {
        images: vec![LabeledImage { pixels: img.clone(), grade: 0, id: "a".into() }, LabeledImage { pixels: img, grade: 1, id: "b".into() }],
        per_class_counts: BTreeMap::from([(0, 1), (1, 1)]),
        num_classes: 2,
        gap_reports: BTreeMap::new(),
    };
    assert!(grow_architecture(&reps, 0.99).is_err());
}

#[test]
fn minimal_arch_fixture() {
    let json = br#"{
  "input": [16, 16, 1],
  "num_classes": 2,
  "layers": [
    {"kind": "conv_block", "kernel_size": 7, "out_channels": 4, "activation": "relu"},
    {"kind": "maxpool", "window": 2, "stride": 2},
    {"kind": "gap"},
    {"kind": "gmp"},
    {"kind": "concat"},
    {"kind": "dropout", "p": 0.25},
    {"kind": "softmax", "classes": 2}
  ],
  "trace_history": [[1, 2.5]]
}"#;
    let arch = load_arch(json).unwrap();
    assert_eq!(arch.depth(), 1);
    assert_eq!(arch.dropout_p(), Some(0.25));
    // BN 2·1 + conv 7·7·1·4 + dense (2·4)·2 + 2
    assert_eq!(count_complexity(&arch).unwrap().learnable_parameters, 2 + 196 + 18);
    assert!(load_arch(br#"{"input":[16,16,1],"num_classes":2,"layers":[{"kind":"conv_block","kernel_size":7}],"trace_history":[]}"#).is_err());
}
