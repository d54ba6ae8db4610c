//! Hand-checkable examples, each compared against an independent oracle.

use slideqa_core::assessment::{agreement, truncate_2dp, verdicts, LabelHistogram, Staining, Thresholds, Verdicts};
use slideqa_core::density::{build_density_grid, region_density, render_heatmap, DensityGrid, DensityParams};
use slideqa_core::features::{cell_histograms, color_lbp_counts, lbp_code, uniform_bins, LBP_BINS};
use slideqa_core::infer::{
    classify_patch, fit, flop_cost, head_gradient, standard_conv, Activation, Architecture, ConvKernel, ConvLayerSpec,
    FeatureMap, LayerKind, ModelContainer, SoftmaxHead, TilePrediction, TrainConfig, TrainingSet,
};
use slideqa_core::slide_io::{extract_patch, make_grid, Patch, SlideImage};
use slideqa_core::{Label, NUM_LABELS};

#[test]
fn overlapping_grid_origins() {
    let slide = SlideImage::filled(448, 448, [0; 3]).unwrap();
    let grid = make_grid(&slide, 224, 112).unwrap();
    assert_eq!((grid.rows, grid.cols), (3, 3));
    let xs: Vec<u32> = (0..3).map(|c| grid.origin(0, c).0).collect();
    assert_eq!(xs, [0, 112, 224]);
}

#[test]
fn reflection_pattern_on_tiny_slide() {
    let (a, b) = ([10, 20, 30], [200, 100, 50]);
    let slide = SlideImage::new(2, 1, [a, b].concat()).unwrap();
    let grid = make_grid(&slide, 8, 8).unwrap();
    let patch = extract_patch(&slide, &grid, 0, 0).unwrap();
    let row: Vec<[u8; 3]> = (0..8).map(|x| patch.pixel(x, 0)).collect();
    assert_eq!(row, [a, b, b, a, a, b, b, a]);
    // the single slide row reflects onto every patch row
    assert_eq!(patch.pixel(3, 5), a);
}

#[test]
fn ones_convolution_counts_taps() {
    let input = FeatureMap::new(3, 1, vec![1.0; 9]).unwrap();
    let out = standard_conv(&input, &ConvKernel::new(3, 1, 1, vec![1.0; 9]).unwrap(), 1).unwrap();
    // taps inside the 3x3 input for each output position
    let oracle = |y: i32, x: i32| -> f32 {
        let mut n = 0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                if (0..3).contains(&(y + dy)) && (0..3).contains(&(x + dx)) {
                    n += 1;
                }
            }
        }
        n as f32
    };
    for y in 0..3 {
        for x in 0..3 {
            assert_eq!(out.get(y, x, 0), oracle(y as i32, x as i32));
        }
    }
    assert_eq!(out.get(1, 1, 0), 9.0);
    assert_eq!(out.get(0, 0, 0), 4.0);
}

fn spec(k: usize, m: usize, n: usize) -> ConvLayerSpec {
    ConvLayerSpec {
        kind: LayerKind::Standard,
        kernel: k,
        in_channels: m,
        out_channels: n,
        stride: 1,
        activation: Activation::None,
    }
}

#[test]
fn mac_counts_by_hand() {
    let oracle = |k: u128, m: u128, n: u128, f: u128| (k * k * m * n * f * f, k * k * m * f * f + m * n * f * f);
    let c = flop_cost(&spec(3, 32, 64), 112).unwrap();
    assert_eq!((c.standard_macs, c.separable_macs), oracle(3, 32, 64, 112));
    assert_eq!((c.standard_macs, c.separable_macs), (231_211_008, 29_302_784));
    assert!((c.ratio_f64() - 7.890).abs() < 5e-4);
    let c = flop_cost(&spec(3, 1, 1), 4).unwrap();
    assert_eq!((c.standard_macs, c.separable_macs), (144, 160));
}

#[test]
fn biased_head_picks_dense() {
    let model = ModelContainer::initialize(Architecture::reference("slidenet-128").unwrap(), 1).unwrap();
    let (w, b) = model.head();
    let mut bias = b.to_vec();
    bias[Label::Dense.index()] = 10.0;
    let model = model.with_head(&vec![0.0; w.len()], &bias).unwrap();
    let patch = Patch::new((0, 0), 128, vec![90; 128 * 128 * 3]).unwrap();
    let p = classify_patch(&model, &patch).unwrap();
    let oracle = 10f64.exp() / (10f64.exp() + 7.0);
    assert_eq!(p.l1, Label::Dense);
    assert!((p.probability(Label::Dense) - oracle).abs() < 1e-6);
    assert!(p.probability(Label::Dense) > 0.99);
}

/// Multiclass perceptron; returns `true` once an epoch makes no mistakes.
fn perceptron_separates(rows: &[Vec<f32>], labels: &[usize], classes: usize, epochs: usize) -> bool {
    let dim = rows[0].len() + 1;
    let mut w = vec![vec![0f64; dim]; classes];
    let score = |w: &[f64], x: &[f32]| w[0] + x.iter().zip(&w[1..]).map(|(a, b)| *a as f64 * b).sum::<f64>();
    for _ in 0..epochs {
        let mut mistakes = 0;
        for (x, &y) in rows.iter().zip(labels) {
            let pred = (0..classes)
                .max_by(|&a, &b| score(&w[a], x).total_cmp(&score(&w[b], x)).then(b.cmp(&a)))
                .unwrap();
            if pred != y {
                mistakes += 1;
                for (j, xi) in std::iter::once(1.0).chain(x.iter().map(|&v| v as f64)).enumerate() {
                    w[y][j] += xi;
                    w[pred][j] -= xi;
                }
            }
        }
        if mistakes == 0 {
            return true;
        }
    }
    false
}

#[test]
fn two_class_toy_inside_eight_class_head() {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..100 {
        let t = i as f32 / 100.0;
        rows.push(vec![1.0 + t, 0.3 - t * 0.5]);
        labels.push(Label::Dense.index());
        rows.push(vec![-1.0 - t, -0.2 + t * 0.4]);
        labels.push(Label::Empty.index());
    }
    assert!(perceptron_separates(&rows, &labels, NUM_LABELS, 100));
    let set = TrainingSet::from_rows(&rows, labels).unwrap();
    let (_, report) = fit(&SoftmaxHead::zeros(2, NUM_LABELS), &set, &TrainConfig::default()).unwrap();
    assert!(report.accuracy >= 0.99, "accuracy {}", report.accuracy);
}

#[test]
fn zero_head_bias_gradient_is_softmax_minus_onehot() {
    let k = 5;
    let set = TrainingSet::new(4, vec![0.1, -2.0, 3.0, 0.5], vec![k]).unwrap();
    let g = head_gradient(&SoftmaxHead::zeros(4, NUM_LABELS), &set).unwrap();
    for (j, v) in g.bias.iter().enumerate() {
        let oracle = 1.0 / NUM_LABELS as f64 - if j == k { 1.0 } else { 0.0 };
        assert!((v - oracle).abs() < 1e-15);
    }
}

#[test]
fn vertical_step_fills_the_horizontal_gradient_bin() {
    let side = 32;
    let mut px = Vec::new();
    for _y in 0..side {
        for x in 0..side {
            let v = if x < 12 { 40 } else { 200 };
            px.extend_from_slice(&[v, v, v]);
        }
    }
    let cells = cell_histograms(&Patch::new((0, 0), side as u32, px).unwrap()).unwrap();
    let per_row = side / 8;
    for cy in 0..per_row {
        // columns 11 and 12 carry the central difference; both sit in cell 1
        let crossing = &cells[cy * per_row + 1];
        let (best, _) = crossing.iter().enumerate().fold((0, f32::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert_eq!(best, 0);
        assert!(crossing[1..].iter().all(|&v| v == 0.0));
        for cx in [0, 2, 3] {
            assert!(cells[cy * per_row + cx].iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn bright_ring_gives_the_all_ones_code() {
    let mut px = vec![200u8; 27];
    px[12..15].copy_from_slice(&[100, 100, 100]);
    let patch = Patch::new((0, 0), 3, px).unwrap();
    assert_eq!(lbp_code(&patch, 1, 1, 0), 0b1111_1111);
    // 0xff is the largest uniform code, so it lands in the last uniform bin
    let uniform: Vec<u16> = (0u16..256).filter(|&c| (c as u8 ^ (c as u8).rotate_left(1)).count_ones() <= 2).collect();
    assert_eq!(uniform.len(), LBP_BINS - 1);
    assert_eq!(uniform_bins()[255] as usize, uniform.len() - 1);
    let counts = color_lbp_counts(&patch).unwrap();
    assert_eq!(counts[0][LBP_BINS - 2], 1);
}

#[test]
fn density_by_hand() {
    let params = DensityParams::default();
    let s = |x: f64| 256.0 - x * x;
    let p = TilePrediction::with_top_two((0, 0), Label::Dense, Label::EpiOnly);
    assert!((region_density(&p, &params).unwrap() - (0.8 * s(1.0) + 0.2 * s(8.0))).abs() < 1e-9);
    assert!((region_density(&p, &params).unwrap() - 242.4).abs() < 1e-9);
    let q = TilePrediction::with_top_two((0, 0), Label::Edge, Label::Dirt);
    assert!((region_density(&q, &params).unwrap() - 75.8).abs() < 1e-9);

    let slide = SlideImage::filled(16, 16, [0; 3]).unwrap();
    let grid = make_grid(&slide, 16, 16).unwrap();
    let d = build_density_grid(&[p], &grid, &params).unwrap();
    assert_eq!(d.to_csv(), "242.4\n");
}

#[test]
fn heat_color_rounding() {
    let img = render_heatmap(&DensityGrid::uniform(1, 1, 242.4).unwrap(), 8, 8, None, 1.0).unwrap();
    // (I, I, 255 - I) rounded half away from zero
    let oracle = [242.4f64, 242.4, 255.0 - 242.4].map(|v| v.round() as u8);
    assert_eq!(img.pixel(3, 3), oracle);
    assert_eq!(oracle, [242, 242, 13]);
}

#[test]
fn half_crystalized_is_bad_staining() {
    let mut counts = [0u64; NUM_LABELS];
    counts[Label::Crystalized.index()] = 5;
    counts[Label::Dense.index()] = 5;
    counts[Label::Empty.index()] = 30;
    let v = verdicts(&LabelHistogram::from_counts(counts).unwrap(), &Thresholds::default());
    assert_eq!(v.verdicts.staining, Staining::Bad);
}

fn v(s: &str, d: &str, g: &str) -> Verdicts {
    Verdicts {
        staining: s.parse().unwrap(),
        density: d.parse().unwrap(),
        damage: g.parse().unwrap(),
    }
}

#[test]
fn expert_comparison_rows() {
    let system = [
        v("Bad", "Low", "Average"),
        v("Good", "Average", "Severe"),
        v("Average", "High", "Low"),
        v("Good", "Average", "Low"),
        v("Good", "High", "Low"),
        v("Average", "Average", "Low"),
    ];
    let experts = [
        v("Bad", "Low", "Low"),
        v("Good", "Average", "Severe"),
        v("Good", "High", "Low"),
        v("Good", "High", "Low"),
        v("Good", "High", "Low"),
        v("Average", "High", "Low"),
    ];
    let a = agreement(&system, &experts).unwrap();
    assert_eq!(a.matches, [2, 3, 2, 2, 3, 2]);
    assert_eq!(truncate_2dp(a.per_slide[0]), "0.66");
    assert_eq!(a.per_slide[1], 1.0);
    assert_eq!(format!("{:.3}", a.overall), "0.778");
    assert_eq!(a.overall, 14.0 / 18.0);
}
