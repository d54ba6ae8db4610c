use num_rational::Ratio;
use proptest::prelude::*;

use slideqa_core::assessment::{agreement, histogram, verdicts, Damage, LabelHistogram, Staining, Density, Thresholds, Verdicts};
use slideqa_core::density::{self, label_score, region_density, DensityGrid, DensityParams};
use slideqa_core::features::{
    cell_histograms, color_lbp_features, hog_features, hog_len, train_linear, DescriptorId, COLOR_LBP_LEN, HOG_BINS,
};
use slideqa_core::infer::{
    depthwise_separable_conv, finetune_head, flop_cost, network_cost, Activation, Architecture, ConvLayerSpec,
    DepthwiseKernel, FeatureMap, FeatureSource, LayerKind, ModelContainer, PointwiseKernel, TilePrediction,
    TrainConfig, TrainingSet,
};
use slideqa_core::pipeline::classify_tiles;
use slideqa_core::slide_io::{self, decode_image, encode_png, make_grid, Patch, SlideImage};
use slideqa_core::{Label, NUM_LABELS};

// ---------- oracles ----------

/// Plain nested-loop "same" convolution with kernel `[ky][kx][m][n]`.
fn dense_oracle(input: &[f32], side: usize, m: usize, kernel: &[f32], k: usize, n: usize, stride: usize) -> Vec<f32> {
    let out = side.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(side);
    let pad = (total / 2) as isize;
    let mut y = vec![0f32; out * out * n];
    for oy in 0..out {
        for ox in 0..out {
            for o in 0..n {
                let mut acc = 0f64;
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad;
                        let ix = (ox * stride + kx) as isize - pad;
                        if iy < 0 || ix < 0 || iy >= side as isize || ix >= side as isize {
                            continue;
                        }
                        for c in 0..m {
                            let v = input[(iy as usize * side + ix as usize) * m + c];
                            acc += v as f64 * kernel[((ky * k + kx) * m + c) * n + o] as f64;
                        }
                    }
                }
                y[(oy * out + ox) * n + o] = acc as f32;
            }
        }
    }
    y
}

fn image_from(width: u32, height: u32, seed: &[u8]) -> SlideImage {
    let len = (width * height * 3) as usize;
    let data = (0..len).map(|i| seed[i % seed.len()].wrapping_add((i / seed.len()) as u8)).collect();
    SlideImage::new(width, height, data).unwrap()
}

fn label_strategy() -> impl Strategy<Value = Label> {
    (0..NUM_LABELS).prop_map(|i| Label::from_index(i).unwrap())
}

// ---------- slide io ----------

proptest! {
    #[test]
    fn png_and_ppm_round_trip(w in 1u32..24, h in 1u32..24, seed in proptest::collection::vec(any::<u8>(), 1..40)) {
        let img = image_from(w, h, &seed);
        prop_assert_eq!(&decode_image(&encode_png(&img).unwrap()).unwrap(), &img);
        let mut ppm = Vec::new();
        slide_io::encode_ppm(&img, &mut ppm).unwrap();
        prop_assert_eq!(&decode_image(&ppm).unwrap(), &img);
    }

    #[test]
    fn tiles_cover_every_pixel(w in 1u32..80, h in 1u32..80, tile in 8u32..24, stride_frac in 1u32..=4) {
        let stride = (tile * stride_frac / 4).max(1);
        let slide = SlideImage::filled(w, h, [0, 0, 0]).unwrap();
        let grid = make_grid(&slide, tile, stride).unwrap();
        let mut hits = vec![0u32; (w * h) as usize];
        for (r, c) in grid.indices() {
            let (x0, y0) = grid.origin(r, c);
            for y in y0..(y0 + tile).min(h) {
                for x in x0..(x0 + tile).min(w) {
                    hits[(y * w + x) as usize] += 1;
                }
            }
        }
        prop_assert!(hits.iter().all(|&n| n >= 1));
        if stride == tile {
            prop_assert!(hits.iter().all(|&n| n == 1));
        }
    }

    #[test]
    fn extraction_is_pure(w in 8u32..40, h in 8u32..40, seed in proptest::collection::vec(any::<u8>(), 1..16)) {
        let slide = image_from(w, h, &seed);
        let grid = make_grid(&slide, 8, 5).unwrap();
        for (r, c) in grid.indices() {
            let a = slide_io::extract_patch(&slide, &grid, r, c).unwrap();
            let b = slide_io::extract_patch(&slide.clone(), &grid, r, c).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

// ---------- inference engine ----------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn separable_matches_dense_oracle(
        side in 1usize..=8,
        m in 1usize..=4,
        n in 1usize..=4,
        k in prop::sample::select(vec![1usize, 3, 5]),
        stride in 1usize..=2,
        seed in proptest::collection::vec(-1.0f32..1.0, 64),
    ) {
        let pick = |i: usize| seed[i % seed.len()] * (1.0 + (i / seed.len()) as f32 * 0.01);
        let input: Vec<f32> = (0..side * side * m).map(pick).collect();
        let dw: Vec<f32> = (0..k * k * m).map(|i| pick(i + 7)).collect();
        let pw: Vec<f32> = (0..m * n).map(|i| pick(i + 13)).collect();
        let mut factored = vec![0f32; k * k * m * n];
        for t in 0..k * k {
            for c in 0..m {
                for o in 0..n {
                    factored[(t * m + c) * n + o] = dw[t * m + c] * pw[c * n + o];
                }
            }
        }
        let map = FeatureMap::new(side, m, input.clone()).unwrap();
        let got = depthwise_separable_conv(
            &map,
            &DepthwiseKernel::new(k, m, dw).unwrap(),
            &PointwiseKernel::new(m, n, pw).unwrap(),
            stride,
        ).unwrap();
        let want = dense_oracle(&input, side, m, &factored, k, n, stride);
        prop_assert_eq!(got.values().len(), want.len());
        let diff = got.values().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
        prop_assert!(diff < 1e-5, "max abs diff {}", diff);
    }

    #[test]
    fn cost_identity(k in prop::sample::select(vec![1u32, 3, 5, 7]), m in 1u32..512, n in 1u32..512, df in 1u64..256) {
        let spec = ConvLayerSpec {
            kind: LayerKind::Standard,
            kernel: k as usize,
            in_channels: m as usize,
            out_channels: n as usize,
            stride: 1,
            activation: Activation::None,
        };
        let cost = flop_cost(&spec, df).unwrap();
        let expected = Ratio::new(1u128, n as u128) + Ratio::new(1u128, (k * k) as u128);
        prop_assert_eq!(cost.ratio.recip(), expected);
    }

    #[test]
    fn softmax_is_a_simplex_point(logits in proptest::collection::vec(-50.0f32..50.0, NUM_LABELS)) {
        let p = TilePrediction::from_logits((0, 0), &logits).unwrap();
        prop_assert!(p.probabilities.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn classification_is_thread_replicable() {
    let model = ModelContainer::initialize(Architecture::reference("slidenet-128").unwrap(), 11).unwrap();
    let (w, b) = model.head();
    let w: Vec<f32> = (0..w.len()).map(|i| ((i * 37 % 101) as f32 - 50.0) / 40.0).collect();
    let model = model.with_head(&w, b).unwrap();
    let (slide, _) = slideqa_core::fixtures::generate_slide(256, 256, 128, 5).unwrap();
    let grid = make_grid(&slide, 128, 64).unwrap();
    let one = classify_tiles(&model, &slide, &grid, 1).unwrap();
    let many = classify_tiles(&model, &slide, &grid, 4).unwrap();
    assert_eq!(one.len(), 9);
    for (a, b) in one.iter().zip(&many) {
        assert_eq!(a.tile_index, b.tile_index);
        assert_eq!(a.probabilities.map(f64::to_bits), b.probabilities.map(f64::to_bits));
    }
}

fn small_set() -> TrainingSet {
    let rows: Vec<Vec<f32>> = (0..40)
        .map(|i| (0..36).map(|j| ((i * 7 + j * 3) % 11) as f32 / 10.0 - 0.5).collect())
        .collect();
    let labels = (0..40).map(|i| i % 8).collect();
    TrainingSet::from_rows(&rows, labels).unwrap()
}

#[test]
fn finetune_is_bitwise_reproducible() {
    let arch = Architecture::linear("t", FeatureSource::Hog, 16, 36);
    let model = ModelContainer::initialize(arch, 3).unwrap();
    let cfg = TrainConfig { epochs: 20, batch_size: 7, ..TrainConfig::default() };
    let (a, ra) = finetune_head(&model, &small_set(), &cfg).unwrap();
    let (b, rb) = finetune_head(&model, &small_set(), &cfg).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_eq!(ra, rb);
}

// ---------- features ----------

#[test]
fn feature_lengths() {
    assert_eq!(hog_len(128), Some(8100));
    assert_eq!(hog_len(64), Some(36 * 49));
    assert_eq!(COLOR_LBP_LEN, 177);
    assert_eq!(DescriptorId::ColorLbp.len(64), Some(177));
}

#[test]
fn trainer_parity() {
    let cfg = TrainConfig { epochs: 15, batch_size: 9, ..TrainConfig::default() };
    let (linear, r1) = train_linear(DescriptorId::Hog, 16, &small_set(), &cfg).unwrap();
    let arch = Architecture::linear("hog-linear", FeatureSource::Hog, 16, 36);
    let (tuned, r2) = finetune_head(&ModelContainer::initialize(arch, cfg.seed).unwrap(), &small_set(), &cfg).unwrap();
    assert_eq!(linear.to_bytes(), tuned.to_bytes());
    assert_eq!(r1, r2);
}

/// Texture with a period of two cells horizontally and one cell vertically.
fn periodic(x: usize, y: usize) -> u8 {
    let u = x % 16;
    let v = y % 8;
    (40 + 9 * u + 5 * ((u * v) % 7) + 3 * v) as u8
}

fn crop_periodic(offset: usize, side: usize) -> Patch {
    let mut px = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let v = periodic(x + offset, y);
            px.extend_from_slice(&[v, v / 2 + 30, 255 - v]);
        }
    }
    Patch::new((0, 0), side as u32, px).unwrap()
}

#[test]
fn hog_cell_shift_permutes_interior_cells() {
    let side = 64;
    let cells = side / 8;
    let a = cell_histograms(&crop_periodic(0, side)).unwrap();
    let b = cell_histograms(&crop_periodic(8, side)).unwrap();
    let mut sum_a = 0f64;
    let mut sum_b = 0f64;
    // cells away from the replicated border only
    for cy in 1..cells - 1 {
        for cx in 1..cells - 2 {
            assert_eq!(b[cy * cells + cx], a[cy * cells + cx + 1], "cell ({cy},{cx})");
        }
        for cx in 1..cells - 1 {
            sum_a += a[cy * cells + cx].iter().map(|&v| v as f64).sum::<f64>();
            sum_b += b[cy * cells + cx].iter().map(|&v| v as f64).sum::<f64>();
        }
    }
    assert!((sum_a - sum_b).abs() <= 1e-3 * sum_a.max(1.0), "{sum_a} vs {sum_b}");
    assert_eq!(a[0].len(), HOG_BINS);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hog_ignores_brightness_shift(seed in proptest::collection::vec(0u8..=200, 32..64), shift in 0u8..=55) {
        let side = 16usize;
        let px: Vec<u8> = (0..side * side * 3).map(|i| seed[i % seed.len()].wrapping_mul((i / seed.len()) as u8 | 1) % 201).collect();
        let shifted: Vec<u8> = px.iter().map(|&v| v + shift).collect();
        let a = hog_features(&Patch::new((0, 0), 16, px).unwrap()).unwrap();
        let b = hog_features(&Patch::new((0, 0), 16, shifted).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lbp_ignores_monotone_remap(
        px in proptest::collection::vec(0u8..128, 12 * 12 * 3),
        steps in proptest::collection::vec(proptest::collection::vec(1u8..=2, 128), 3),
    ) {
        // strictly increasing per-channel map from 0..128 into 0..=254
        let maps: Vec<Vec<u8>> = steps.iter().map(|s| {
            let mut acc = 0u8;
            s.iter().enumerate().map(|(i, &d)| { if i > 0 { acc += d; } acc }).collect()
        }).collect();
        let remapped: Vec<u8> = px.iter().enumerate().map(|(i, &v)| maps[i % 3][v as usize]).collect();
        let a = color_lbp_features(&Patch::new((0, 0), 12, px).unwrap()).unwrap();
        let b = color_lbp_features(&Patch::new((0, 0), 12, remapped).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}

// ---------- density ----------

#[test]
fn density_range_over_all_label_pairs() {
    let params = DensityParams::default();
    for l1 in Label::ALL {
        for l2 in Label::ALL {
            let v = region_density(&TilePrediction::with_top_two((0, 0), l1, l2), &params).unwrap();
            assert!((0.0..=255.0).contains(&v), "{l1}/{l2}: {v}");
        }
    }
}

#[test]
fn density_increases_with_first_label_score() {
    let params = DensityParams::default();
    for l2 in Label::ALL {
        for a in Label::ALL {
            for b in Label::ALL {
                let (sa, sb) = (label_score(a, &params).unwrap(), label_score(b, &params).unwrap());
                if sb > sa {
                    let ia = region_density(&TilePrediction::with_top_two((0, 0), a, l2), &params).unwrap();
                    let ib = region_density(&TilePrediction::with_top_two((0, 0), b, l2), &params).unwrap();
                    assert!(ib > ia);
                }
            }
        }
    }
}

#[test]
fn color_endpoints_exact() {
    assert_eq!(density::heat_color(0.0), [0.0, 0.0, 255.0]);
    assert_eq!(density::heat_color(255.0), [255.0, 255.0, 0.0]);
}

proptest! {
    #[test]
    fn rendering_is_a_function_of_the_grid(values in proptest::collection::vec(0.0f64..=255.0, 6), opacity in 0.0f64..=1.0) {
        let a = DensityGrid::new(2, 3, values.clone()).unwrap();
        let b = DensityGrid::new(2, 3, values).unwrap();
        let slide = SlideImage::filled(40, 25, [10, 200, 90]).unwrap();
        let ra = density::render_heatmap(&a, 16, 12, Some(&slide), opacity).unwrap();
        let rb = density::render_heatmap(&b, 16, 12, Some(&slide), opacity).unwrap();
        prop_assert_eq!(ra, rb);
    }
}

// ---------- assessment ----------

fn counts_strategy() -> impl Strategy<Value = [u64; NUM_LABELS]> {
    proptest::collection::vec(0u64..50, NUM_LABELS)
        .prop_filter("non-empty", |c| c.iter().sum::<u64>() > 0)
        .prop_map(|v| v.try_into().unwrap())
}

fn verdict_strategy() -> impl Strategy<Value = Verdicts> {
    (0..3usize, 0..3usize, 0..3usize).prop_map(|(s, d, g)| Verdicts {
        staining: [Staining::Good, Staining::Average, Staining::Bad][s],
        density: [Density::High, Density::Average, Density::Low][d],
        damage: [Damage::Low, Damage::Average, Damage::Severe][g],
    })
}

fn damage_rank(d: Damage) -> u8 {
    match d {
        Damage::Low => 0,
        Damage::Average => 1,
        Damage::Severe => 2,
    }
}

proptest! {
    #[test]
    fn verdicts_are_scale_invariant(counts in counts_strategy(), k in 1u64..50) {
        let t = Thresholds::default();
        let a = verdicts(&LabelHistogram::from_counts(counts).unwrap(), &t);
        let b = verdicts(&LabelHistogram::from_counts(counts.map(|c| c * k)).unwrap(), &t);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn histogram_ratios_sum_to_one(labels in proptest::collection::vec(label_strategy(), 1..200)) {
        let preds: Vec<_> = labels.iter().enumerate()
            .map(|(i, &l)| TilePrediction::with_top_two((0, i), l, Label::Empty))
            .collect();
        let h = histogram(&preds).unwrap();
        prop_assert_eq!(h.total(), labels.len() as u64);
        prop_assert!((h.ratios().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn more_damage_never_lowers_the_damage_verdict(counts in counts_strategy(), extra in 1u64..100) {
        let t = Thresholds::default();
        let mut more = counts;
        more[Label::Damaged.index()] += extra;
        let a = verdicts(&LabelHistogram::from_counts(counts).unwrap(), &t).verdicts.damage;
        let b = verdicts(&LabelHistogram::from_counts(more).unwrap(), &t).verdicts.damage;
        prop_assert!(damage_rank(b) >= damage_rank(a));
    }

    #[test]
    fn agreement_symmetric_and_reflexive(pairs in proptest::collection::vec((verdict_strategy(), verdict_strategy()), 1..20)) {
        let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let ab = agreement(&a, &b).unwrap();
        let ba = agreement(&b, &a).unwrap();
        prop_assert_eq!(&ab, &ba);
        let aa = agreement(&a, &a).unwrap();
        prop_assert!(aa.per_slide.iter().all(|&v| v == 1.0));
        prop_assert_eq!(aa.overall, 1.0);
        let mean = ab.per_slide.iter().sum::<f64>() / ab.per_slide.len() as f64;
        prop_assert!((mean - ab.overall).abs() < 1e-12);
    }
}

// ---------- bench ----------

#[test]
fn smaller_reference_network_costs_less() {
    let small = network_cost(&Architecture::reference("slidenet-128").unwrap()).unwrap();
    let large = network_cost(&Architecture::reference("slidenet-224").unwrap()).unwrap();
    assert!(small.total_actual_macs < large.total_actual_macs);
}
