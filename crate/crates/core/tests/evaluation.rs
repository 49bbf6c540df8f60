use deeppcanet::dataset::{generate_toy_dataset, LabeledImage};
use deeppcanet::evaluation::{classification_metrics, confusion_matrix, grad_cam, roc_auc, ConfusionMatrix};
use deeppcanet::image::Image;
use deeppcanet::netbuilder::{attach_head, grow_network, GrowOptions};
use deeppcanet::nn::ModelState;
use deeppcanet::representatives::select_representatives;
use deeppcanet::rng::seeded;

fn model() -> (ModelState, Vec<LabeledImage>) {
    let data = generate_toy_dataset(6, 2, 32, &mut seeded(21)).unwrap();
    let reps = select_representatives(&data, &mut seeded(22)).unwrap();
    let body = grow_network(&reps, 0.99, &GrowOptions::default()).unwrap();
    (attach_head(&body, 0.25, &mut seeded(23)).unwrap(), data.into_items())
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b })
}

#[test]
fn heatmap_contract() {
    let (m, items) = model();
    for img in items.iter().take(4) {
        for t in 0..2 {
            let h = grad_cam(&m, img, t).unwrap();
            assert_eq!((h.height, h.width), (32, 32));
            assert!(h.values.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(h.max() == 0.0 || h.max() == 1.0);
        }
    }
    assert!(grad_cam(&m, &items[0], 2).is_err());
}

#[test]
fn argmax_pixel_survives_weight_scaling() {
    let (m, items) = model();
    let mut scaled = m.clone();
    scaled.head_mut().unwrap().dense.weight.iter_mut().for_each(|w| *w *= 3.5);
    for img in items.iter().take(4) {
        let a = grad_cam(&m, img, img.grade).unwrap();
        let b = grad_cam(&scaled, img, img.grade).unwrap();
        if a.max() > 0.0 {
            assert_eq!(argmax(&a.values), argmax(&b.values));
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn overlay_is_rgb_of_input_size() {
    let (m, items) = model();
    let h = grad_cam(&m, &items[0], 0).unwrap();
    let o = h.overlay(&items[0].pixels);
    assert_eq!(o.shape(), (32, 32, 3));
    assert_eq!(h.to_image().shape(), (32, 32, 1));
}

#[test]
fn constant_input_gives_flat_or_zero_map() {
    let (m, _) = model();
    let img = LabeledImage::new(Image::from_fn(32, 32, 1, |_, _, _| 0.5), 0, "flat").unwrap();
    let h = grad_cam(&m, &img, 0).unwrap();
    assert!(h.values.iter().all(|v| v.is_finite()));
}

#[test]
fn metrics_from_labels() {
    let truth = [0, 0, 1, 1, 2, 2, 2];
    let pred = [0, 1, 1, 1, 2, 0, 2];
    let cm = confusion_matrix(&truth, &pred, 3).unwrap();
    assert_eq!(cm, ConfusionMatrix::from_counts(vec![vec![1, 1, 0], vec![0, 2, 0], vec![1, 0, 2]]).unwrap());
    let r = classification_metrics(&cm).unwrap();
    assert!((r.accuracy - 5.0 / 7.0).abs() < 1e-15);
    // per class SE: 1/2, 1, 2/3
    assert!((r.sensitivity - (0.5 + 1.0 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
    assert!(confusion_matrix(&[0], &[3], 3).is_err());
}

#[test]
fn roc_worked_example() {
    let r = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    assert!((r.auc - 0.75).abs() < 1e-15);
    assert!(r.to_csv().starts_with("threshold,fpr,tpr\ninf,0,0\n"));
    assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
}
