use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use slideqa_core::assessment::{agreement, pair_rows, parse_verdict_rows, AssessmentReport, Thresholds, VerdictRow};
use slideqa_core::bench::{run_bench, BenchConfig, PatchSource};
use slideqa_core::features::{train_linear, DescriptorId};
use slideqa_core::fixtures;
use slideqa_core::infer::{
    classify_patch, finetune_head, flop_cost, load_model, network_cost, Activation, Architecture, ConvLayerSpec,
    FeatureSource, LayerKind, ModelContainer, TrainConfig, TrainingSet,
};
use slideqa_core::pipeline::{assess_slide, par_map, AssessConfig, PipelineError};
use slideqa_core::slide_io::{self, Patch};
use slideqa_core::{Label, NUM_LABELS};

use crate::error::CliError;
use crate::patches;
use crate::Engine;

type Result<T = ()> = std::result::Result<T, CliError>;

fn engine_of(model: &ModelContainer) -> Engine {
    match model.architecture().features {
        FeatureSource::Cnn => Engine::Dwnet,
        FeatureSource::Hog => Engine::Hog,
        FeatureSource::ColorLbp => Engine::ColorLbp,
    }
}

/// A reference descriptor name, or a path to a descriptor JSON file.
fn resolve_arch(spec: &str) -> Result<Architecture> {
    if let Some(arch) = Architecture::reference(spec) {
        return Ok(arch);
    }
    let path = Path::new(spec);
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Architecture::from_json(&text)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn stdout_err(e: io::Error) -> CliError {
    CliError::Internal(format!("writing to stdout: {e}"))
}

pub fn classify(dir: &Path, model_path: &Path, engine: Option<Engine>, threads: usize) -> Result {
    let model = load_model(model_path)?;
    if let Some(expected) = engine {
        let found = engine_of(&model);
        if found != expected {
            return Err(CliError::usage(format!(
                "model `{}` is a {} model, not {}",
                model.name(),
                found.id(),
                expected.id()
            )));
        }
    }
    let (loaded, _) = patches::load(patches::scan(dir)?);
    if loaded.is_empty() {
        return Err(CliError::usage("no readable patches"));
    }
    let preds = par_map(threads, &loaded, |(_, p)| classify_patch(&model, p))?;

    let mut out = String::from("path,l1,p1,l2,p2\n");
    for ((entry, _), p) in loaded.iter().zip(&preds) {
        writeln!(
            out,
            "{},{},{:.4},{},{:.4}",
            entry.path.display(),
            p.l1,
            p.probability(p.l1),
            p.l2,
            p.probability(p.l2)
        )
        .unwrap();
    }
    if loaded.iter().all(|(e, _)| e.label.is_some()) {
        let correct = loaded.iter().zip(&preds).filter(|((e, _), p)| e.label == Some(p.l1)).count();
        writeln!(out, "accuracy,{:.4}", correct as f64 / loaded.len() as f64).unwrap();
    }
    io::stdout().write_all(out.as_bytes()).map_err(stdout_err)
}

pub struct AssessArgs {
    pub slide: PathBuf,
    pub model: PathBuf,
    pub tile: Option<u32>,
    pub stride: Option<u32>,
    pub thresholds: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub heatmap: Option<PathBuf>,
    pub opacity: f64,
    pub timings: bool,
    pub threads: usize,
}

pub fn assess(args: &AssessArgs) -> Result {
    if !(0.0..=1.0).contains(&args.opacity) {
        return Err(CliError::usage(format!("--opacity {} outside [0, 1]", args.opacity)));
    }
    let model = load_model(&args.model)?;
    let thresholds = match &args.thresholds {
        Some(path) => Thresholds::load(path)?,
        None => Thresholds::default(),
    };
    let start = Instant::now();
    let slide = slide_io::load_image(&args.slide)?;
    let decode_ms = start.elapsed().as_secs_f64() * 1e3;

    let config = AssessConfig {
        tile_size: args.tile,
        stride: args.stride,
        threads: args.threads,
        thresholds,
        overlay_opacity: Some(args.opacity),
        timings: args.timings,
        ..AssessConfig::default()
    };
    let id = args
        .slide
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let result = assess_slide(&id, &slide, decode_ms, &model, &config)?;
    if let Some(path) = &args.heatmap {
        slide_io::write_image(&result.heatmap, path)?;
    }
    let json = result.report.to_json();
    let mut stdout = io::stdout().lock();
    match &args.out {
        Some(path) => {
            write_file(path, json.as_bytes())?;
            let r = &result.report;
            let mut text = format!(
                "slide: {}\ngrid: {}x{}\nmean density: {:.1}\nstaining: {}\ndensity: {}\ndamage: {}\n",
                r.slide, r.grid.0, r.grid.1, r.mean_density, r.verdicts.staining, r.verdicts.density, r.verdicts.damage
            );
            if r.all_empty {
                text.push_str("note: every tile was classified Empty\n");
            }
            stdout.write_all(text.as_bytes()).map_err(stdout_err)
        }
        None => stdout.write_all(json.as_bytes()).map_err(stdout_err),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn system_rows(path: &Path) -> Result<Vec<VerdictRow>> {
    let text = read_text(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
    if is_json {
        let report = AssessmentReport::from_json(&text)?;
        Ok(vec![VerdictRow {
            id: report.slide,
            verdicts: report.verdicts,
        }])
    } else {
        Ok(parse_verdict_rows(&text)?)
    }
}

pub fn agree(experts: &Path, system: &[PathBuf]) -> Result {
    let expert_rows = parse_verdict_rows(&read_text(experts)?)?;
    let mut rows = Vec::new();
    for path in system {
        rows.extend(system_rows(path)?);
    }
    let (sys, exp) = pair_rows(&rows, &expert_rows)?;
    let result = agreement(&sys, &exp)?;
    let ids: Vec<String> = rows.into_iter().map(|r| r.id).collect();
    io::stdout().write_all(result.table(&ids).as_bytes()).map_err(stdout_err)
}

fn parse_layer(spec: &str) -> Result<(ConvLayerSpec, u64)> {
    let bad = || CliError::usage(format!("--layer expects DK,M,N,DF with positive integers, got `{spec}`"));
    let nums: Vec<u64> = spec
        .split(',')
        .map(|s| s.trim().parse::<u64>().ok().filter(|&v| v > 0))
        .collect::<Option<_>>()
        .ok_or_else(bad)?;
    let [k, m, n, df] = nums[..] else {
        return Err(bad());
    };
    let layer = ConvLayerSpec {
        kind: LayerKind::Standard,
        kernel: k as usize,
        in_channels: m as usize,
        out_channels: n as usize,
        stride: 1,
        activation: Activation::None,
    };
    Ok((layer, df))
}

pub fn flops(arch: &str, layer: Option<&str>, json: bool) -> Result {
    let mut out = String::new();
    if let Some(spec) = layer {
        let (layer, df) = parse_layer(spec)?;
        let cost = flop_cost(&layer, df)?;
        if json {
            let value = serde_json::json!({
                "standard_macs": cost.standard_macs.to_string(),
                "separable_macs": cost.separable_macs.to_string(),
                "ratio": format!("{}/{}", cost.ratio.numer(), cost.ratio.denom()),
                "ratio_value": cost.ratio_f64(),
            });
            writeln!(out, "{value}").unwrap();
        } else {
            writeln!(out, "standard_macs: {}", cost.standard_macs).unwrap();
            writeln!(out, "separable_macs: {}", cost.separable_macs).unwrap();
            writeln!(
                out,
                "ratio: {}/{} ({:.3})",
                cost.ratio.numer(),
                cost.ratio.denom(),
                cost.ratio_f64()
            )
            .unwrap();
        }
    } else {
        let arch = resolve_arch(arch)?;
        let cost = network_cost(&arch)?;
        if json {
            let text = serde_json::to_string(&cost).map_err(|e| CliError::Internal(e.to_string()))?;
            writeln!(out, "{text}").unwrap();
        } else {
            writeln!(out, "# {} (input {}x{})", cost.name, cost.input_size, cost.input_size).unwrap();
            writeln!(out, "layers,kind,dk,m,n,df,standard_macs,separable_macs,ratio,actual_macs").unwrap();
            for r in &cost.rows {
                let layers: Vec<String> = r.layers.iter().map(usize::to_string).collect();
                let ratio = r.ratio.map_or_else(String::new, |v| format!("{v:.3}"));
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    layers.join("+"),
                    r.description,
                    r.kernel,
                    r.in_channels,
                    r.out_channels,
                    r.side,
                    r.standard_macs,
                    r.separable_macs,
                    ratio,
                    r.actual_macs
                )
                .unwrap();
            }
            writeln!(out, "total_actual_macs,{}", cost.total_actual_macs).unwrap();
            writeln!(out, "total_standard_macs,{}", cost.total_standard_macs).unwrap();
        }
    }
    io::stdout().write_all(out.as_bytes()).map_err(stdout_err)
}

pub struct TrainArgs {
    pub dir: PathBuf,
    pub engine: Engine,
    pub arch: String,
    pub tile: Option<u32>,
    pub out: PathBuf,
    pub epochs: usize,
    pub seed: u64,
    pub threads: usize,
}

fn feature_rows(model: &ModelContainer, patches: &[(patches::PatchEntry, Patch)], threads: usize) -> Result<Vec<Vec<f32>>> {
    Ok(par_map(threads, patches, |(_, p)| Ok::<_, PipelineError>(model.features(p)))?)
}

pub fn train(args: &TrainArgs) -> Result {
    let entries = patches::scan(&args.dir)?;
    if entries.iter().any(|e| e.label.is_none()) {
        return Err(CliError::usage("training needs one subdirectory per label"));
    }
    let (loaded, _) = patches::load(entries);
    if loaded.is_empty() {
        return Err(CliError::usage("empty training set"));
    }
    let mut per_class = [0usize; NUM_LABELS];
    for (e, _) in &loaded {
        per_class[e.label.expect("checked above").index()] += 1;
    }
    for label in Label::ALL {
        if per_class[label.index()] == 0 {
            eprintln!("warning: no training samples for {label}");
        }
    }
    let labels: Vec<usize> = loaded.iter().map(|(e, _)| e.label.unwrap().index()).collect();
    let config = TrainConfig {
        epochs: args.epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };

    let (model, report) = match args.engine {
        Engine::Dwnet => {
            let arch = resolve_arch(&args.arch)?;
            if arch.features != FeatureSource::Cnn {
                return Err(CliError::usage(format!("`{}` is not a CNN descriptor", arch.name)));
            }
            let model = ModelContainer::initialize(arch, args.seed)?;
            let set = TrainingSet::from_rows(&feature_rows(&model, &loaded, args.threads)?, labels)?;
            finetune_head(&model, &set, &config)?
        }
        Engine::Hog | Engine::ColorLbp => {
            let descriptor = if args.engine == Engine::Hog {
                DescriptorId::Hog
            } else {
                DescriptorId::ColorLbp
            };
            let side = args.tile.unwrap_or_else(|| loaded[0].1.size());
            let dim = descriptor
                .len(side)
                .ok_or_else(|| CliError::usage(format!("patch side {side} does not suit {}", args.engine.id())))?;
            let extractor = ModelContainer::initialize(
                Architecture::linear("extractor", descriptor.source(), side, dim),
                args.seed,
            )?;
            let set = TrainingSet::from_rows(&feature_rows(&extractor, &loaded, args.threads)?, labels)?;
            train_linear(descriptor, side, &set, &config)?
        }
    };
    write_file(&args.out, &model.to_bytes())?;
    let loss = report.losses.last().copied().unwrap_or(f64::NAN);
    println!("samples: {}", loaded.len());
    println!("final loss: {loss:.6}");
    println!("training accuracy: {:.4}", report.accuracy);
    Ok(())
}

pub struct BenchArgs {
    pub engines: Vec<Engine>,
    pub models: Vec<PathBuf>,
    pub archs: Vec<String>,
    pub tile: u32,
    pub patches: Option<PathBuf>,
    pub count: usize,
    pub warmup: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub threads: usize,
}

fn linear_extractor(engine: Engine, side: u32, seed: u64) -> Result<ModelContainer> {
    let descriptor = match engine {
        Engine::Hog => DescriptorId::Hog,
        _ => DescriptorId::ColorLbp,
    };
    let dim = descriptor
        .len(side)
        .ok_or_else(|| CliError::usage(format!("patch side {side} does not suit {}", engine.id())))?;
    let name = format!("{}-linear", engine.id());
    Ok(ModelContainer::initialize(
        Architecture::linear(&name, descriptor.source(), side, dim),
        seed,
    )?)
}

pub fn bench(args: &BenchArgs) -> Result {
    let mut contenders: Vec<(String, ModelContainer)> = Vec::new();
    if !args.models.is_empty() {
        for path in &args.models {
            let model = load_model(path)?;
            contenders.push((format!("{}:{}", engine_of(&model).id(), model.name()), model));
        }
    } else {
        for &engine in &args.engines {
            match engine {
                Engine::Dwnet => {
                    for spec in &args.archs {
                        let model = ModelContainer::initialize(resolve_arch(spec)?, args.seed)?;
                        contenders.push((format!("dwnet:{}", model.name()), model));
                    }
                }
                Engine::Hog | Engine::ColorLbp => {
                    contenders.push((engine.id().to_string(), linear_extractor(engine, args.tile, args.seed)?));
                }
            }
        }
    }

    let encoded = match &args.patches {
        Some(dir) => {
            let mut bytes = Vec::new();
            for entry in patches::scan(dir)? {
                bytes.push(fs::read(&entry.path).map_err(|e| CliError::io(&entry.path, e))?);
            }
            Some(bytes)
        }
        None => None,
    };
    let config = BenchConfig {
        count: args.count,
        warmup: args.warmup,
        threads: args.threads,
        repetitions: args.repetitions,
    };
    let mut stdout = io::stdout().lock();
    for (id, model) in &contenders {
        let source = match &encoded {
            Some(bytes) => PatchSource::Encoded(bytes.clone()),
            // each model sees synthetic patches at its own input size
            None => PatchSource::Decoded(
                fixtures::generate_corpus(2, model.input_size(), args.seed)
                    .into_iter()
                    .map(|(_, p)| p)
                    .collect(),
            ),
        };
        let (result, _) = run_bench(id, |p: &Patch| classify_patch(model, p), &source, &config)?;
        writeln!(stdout, "{}", result.to_json_line()).map_err(stdout_err)?;
    }
    Ok(())
}

pub fn gen_fixtures(out: &Path, per_class: usize, tile: u32, slide: Option<u32>, seed: u64) -> Result {
    if per_class == 0 {
        return Err(CliError::usage("--per-class must be at least 1"));
    }
    if tile < slide_io::MIN_TILE_SIZE {
        return Err(CliError::usage(format!("--tile must be at least {}", slide_io::MIN_TILE_SIZE)));
    }
    let corpus = fixtures::generate_corpus(per_class, tile, seed);
    fixtures::write_corpus(&out.join("patches"), &corpus)?;
    println!("wrote {} patches to {}", corpus.len(), out.join("patches").display());
    if let Some(side) = slide {
        let (image, layout) = fixtures::generate_slide(side, side, tile, seed)?;
        slide_io::write_image(&image, out.join("slide.png"))?;
        let cols = side.div_ceil(tile) as usize;
        let mut csv = String::from("row,col,label\n");
        for (i, label) in layout.iter().enumerate() {
            writeln!(csv, "{},{},{label}", i / cols, i % cols).unwrap();
        }
        write_file(&out.join("slide_layout.csv"), csv.as_bytes())?;
        println!("wrote {}x{} slide to {}", side, side, out.join("slide.png").display());
    }
    Ok(())
}
