use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mcaf_core::atomic::write_atomic;
use mcaf_core::autodiff::check::{grad_check, GradCheckConfig, RandomGraph};
use mcaf_core::classical::{dcp_dehaze, DcpConfig, HazeReport, DEFAULT_THRESHOLDS};
use mcaf_core::data::{build_manifest, Image, ManifestConfig};
use mcaf_core::metrics::{evaluate, niqe_fit, MetricReport, NiqeConfig, NiqeModel};
use mcaf_core::model::{count_params_flops, McafNet, ModelConfig, FLOPS_PER_MAC};
use mcaf_core::train::{train_overfit, TrainConfig};
use mcaf_core::{weights, Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::{Cli, Command, HazeArgs, Method, ModelArgs, Preset};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Dehaze {
            method,
            weights,
            model,
            omega,
            t0,
            radius,
            input,
            output,
        } => {
            let img = load(cli, input)?;
            let mut report = json!({
                "input": input.display().to_string(),
                "output": output.display().to_string(),
                "width": img.width(),
                "height": img.height(),
            });
            let out = match method {
                Method::Dcp => {
                    let cfg = DcpConfig {
                        radius: *radius,
                        omega: *omega,
                        t0: *t0,
                        ..DcpConfig::default()
                    };
                    let r = dcp_dehaze(&img, &cfg)?;
                    report["method"] = json!("dcp");
                    report["atmospheric_light"] = json!(r.atmospheric_light);
                    report["mean_transmission"] = json!(r.transmission.mean());
                    r.image
                }
                Method::Mcafnet => {
                    let cfg = model_config(model, Preset::Default)?;
                    let mut net = McafNet::new(cfg, cli.seed)?;
                    if let Some(w) = weights {
                        weights::load_into(w, &mut net.params)?;
                    }
                    report["method"] = json!("mcafnet");
                    report["weights"] = json!(weights.as_ref().map(|w| w.display().to_string()));
                    dehaze_padded(&net, &img)?
                }
            };
            out.save(output)?;
            emit(cli, &report)
        }
        Command::Analyze { haze, inputs } => {
            let thresholds = thresholds(haze)?;
            let reports = pool(cli)?.install(|| {
                inputs
                    .par_iter()
                    .map(|p| {
                        let img = load(cli, p)?;
                        Ok(HazeReport::analyze(
                            &p.display().to_string(),
                            &img,
                            haze.radius,
                            thresholds,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            if cli.pretty {
                println!("{:<40} {:>10} {:>10}", "path", "mdc", "class");
                for r in &reports {
                    println!(
                        "{:<40} {:>10.2} {:>10}",
                        r.path,
                        r.mean_dark_channel,
                        r.class.as_str()
                    );
                }
                Ok(())
            } else {
                emit_lines(&reports)
            }
        }
        Command::Stratify {
            hazy,
            clear,
            out,
            tile,
            haze,
        } => {
            let cfg = ManifestConfig {
                seed: cli.seed,
                radius: haze.radius,
                thresholds: thresholds(haze)?,
                tile: *tile,
                bands: cli.bands.0,
            };
            let manifest = build_manifest(hazy, clear, &cfg)?;
            manifest.save(out)?;
            let mut counts: BTreeMap<&str, BTreeMap<&str, usize>> = BTreeMap::new();
            for ((class, split), n) in manifest.counts() {
                counts.entry(class.as_str()).or_default().insert(split, n);
            }
            emit(
                cli,
                &json!({
                    "manifest": out.display().to_string(),
                    "records": manifest.records.len(),
                    "counts": counts,
                    "exceptions": manifest.exceptions,
                    "seed": cli.seed,
                }),
            )
        }
        Command::Metrics {
            reference,
            test,
            niqe_model,
        } => {
            let model = niqe_model.as_deref().map(NiqeModel::load).transpose()?;
            let pairs = metric_pairs(reference, test)?;
            let single = !reference.is_dir();
            let rows = pool(cli)?.install(|| {
                pairs
                    .par_iter()
                    .map(|(name, r, t)| {
                        let report = evaluate(&load(cli, r)?, &load(cli, t)?, model.as_ref())?;
                        Ok(MetricRow {
                            file: name.clone(),
                            report,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            if cli.pretty {
                println!(
                    "{:<32} {:>9} {:>11} {:>7} {:>9} {:>8}",
                    "file", "psnr", "mse", "ssim", "ciede2000", "niqe"
                );
                for MetricRow { file, report: m } in &rows {
                    let niqe = m.niqe.map_or("-".to_string(), |v| format!("{v:.3}"));
                    println!(
                        "{file:<32} {:>9.3} {:>11.4e} {:>7.4} {:>9.3} {niqe:>8}",
                        m.psnr, m.mse, m.ssim, m.ciede2000
                    );
                }
                Ok(())
            } else if single {
                println!("{}", to_json(&rows[0].report)?);
                Ok(())
            } else {
                emit_lines(&rows)
            }
        }
        Command::ModelInfo {
            model,
            height,
            width,
        } => {
            let cfg = model_config(model, Preset::Default)?;
            let cost = count_params_flops(&cfg, *height, *width)?;
            if cli.pretty {
                print!("{}", cfg.to_kv());
                println!("{:<16} {:>16}", "input", format!("{width}x{height}"));
                println!("{:<16} {:>16}", "params", cost.params);
                println!("{:<16} {:>16}", "MACs", cost.macs);
                println!("{:<16} {:>16}", "FLOPs", cost.flops);
                println!("{:<16} {:>16}", "FLOPs per MAC", FLOPS_PER_MAC);
                Ok(())
            } else {
                emit(
                    cli,
                    &json!({
                        "config": cfg,
                        "height": height,
                        "width": width,
                        "params": cost.params,
                        "macs": cost.macs,
                        "flops": cost.flops,
                        "flops_per_mac": FLOPS_PER_MAC,
                    }),
                )
            }
        }
        Command::Gradcheck { tol, step, graphs } => {
            let (mut checked, mut worst) = (0, 0.0f64);
            for i in 0..*graphs {
                let seed = cli.seed.wrapping_add(i);
                let (g, store) = RandomGraph::generate(seed)?;
                let cfg = GradCheckConfig {
                    step: *step,
                    tol: *tol,
                    samples_per_param: None,
                    seed,
                };
                let r = grad_check(&g, &store, cfg)?;
                checked += r.checked;
                worst = worst.max(r.max_rel_err());
            }
            emit(
                cli,
                &json!({
                    "graphs": graphs,
                    "elements": checked,
                    "max_rel_err": worst,
                    "tol": tol,
                    "seed": cli.seed,
                }),
            )
        }
        Command::TrainToy {
            hazy,
            clear,
            steps,
            out,
            lr,
            trace,
            model,
        } => {
            let cfg = model_config(model, Preset::Toy)?;
            let train = TrainConfig {
                steps: *steps,
                lr: *lr,
                seed: cli.seed,
                ..TrainConfig::default()
            };
            let outcome = train_overfit(&load(cli, hazy)?, &load(cli, clear)?, &cfg, &train)?;
            weights::save(out, &outcome.params)?;
            if let Some(t) = trace {
                write_atomic(t, outcome.to_jsonl().as_bytes())?;
            }
            emit(
                cli,
                &json!({
                    "weights": out.display().to_string(),
                    "steps": steps,
                    "initial_psnr": outcome.initial_psnr(),
                    "final_psnr": outcome.last.psnr,
                    "psnr_gain": outcome.psnr_gain(),
                    "final_loss": outcome.last.loss,
                    "seed": cli.seed,
                }),
            )
        }
        Command::NiqeFit { out, patch, inputs } => {
            let corpus = inputs
                .iter()
                .map(|p| load(cli, p))
                .collect::<Result<Vec<_>>>()?;
            let cfg = NiqeConfig {
                patch: *patch,
                ..NiqeConfig::default()
            };
            let model = niqe_fit(&corpus, cfg)?;
            model.save(out)?;
            emit(
                cli,
                &json!({
                    "model": out.display().to_string(),
                    "images": corpus.len(),
                    "patch": patch,
                    "regularized": model.regularized,
                }),
            )
        }
    }
}

#[derive(Serialize)]
struct MetricRow {
    file: String,
    #[serde(flatten)]
    report: MetricReport,
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

fn emit<T: Serialize>(cli: &Cli, v: &T) -> Result<()> {
    let s = if cli.pretty {
        serde_json::to_string_pretty(v)?
    } else {
        to_json(v)?
    };
    println!("{s}");
    Ok(())
}

fn emit_lines<T: Serialize>(rows: &[T]) -> Result<()> {
    for r in rows {
        println!("{}", to_json(r)?);
    }
    Ok(())
}

fn load(cli: &Cli, path: &Path) -> Result<Image> {
    Image::load(path)?.select_bands(cli.bands.0)
}

fn pool(cli: &Cli) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))
}

fn thresholds(h: &HazeArgs) -> Result<(f64, f64)> {
    match h.thresholds.as_deref() {
        None => Ok(DEFAULT_THRESHOLDS),
        Some(&[a, b]) if a.is_finite() && b.is_finite() && a < b => Ok((a, b)),
        Some(t) => Err(Error::Invalid(format!(
            "thresholds {t:?} must be finite and increasing"
        ))),
    }
}

fn model_config(m: &ModelArgs, fallback: Preset) -> Result<ModelConfig> {
    if let Some(path) = &m.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        return ModelConfig::from_kv(&text);
    }
    Ok(match m.preset.unwrap_or(fallback) {
        Preset::Default => ModelConfig::default(),
        Preset::Toy => ModelConfig::toy(),
    })
}

/// The network needs sides divisible by 4: replicate the border up to the
/// next multiple and crop the result back.
fn dehaze_padded(net: &McafNet, img: &Image) -> Result<Image> {
    let (w, h) = (img.width(), img.height());
    let (pw, ph) = (w.div_ceil(4) * 4, h.div_ceil(4) * 4);
    let padded = Image::from_fn(pw, ph, |c, y, x| img.get(c, y.min(h - 1), x.min(w - 1)));
    let out = Image::from_tensor(&net.infer(&padded.to_tensor())?)?;
    out.crop(0, 0, h, w)
}

/// (name, reference, test) triples: the two files themselves, or every
/// reference image with a same-named test image when both are directories.
fn metric_pairs(reference: &Path, test: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    match (reference.is_dir(), test.is_dir()) {
        (false, false) => Ok(vec![(
            test.display().to_string(),
            reference.to_path_buf(),
            test.to_path_buf(),
        )]),
        (true, true) => {
            let entries = std::fs::read_dir(reference).map_err(|e| Error::Io {
                path: reference.to_path_buf(),
                source: e,
            })?;
            let mut names = Vec::new();
            for entry in entries {
                let entry = entry.map_err(|e| Error::Io {
                    path: reference.to_path_buf(),
                    source: e,
                })?;
                if entry.path().is_file() && test.join(entry.file_name()).is_file() {
                    names.push(entry.file_name().to_string_lossy().into_owned());
                }
            }
            if names.is_empty() {
                return Err(Error::Invalid(format!(
                    "no same-named images in {} and {}",
                    reference.display(),
                    test.display()
                )));
            }
            names.sort();
            Ok(names
                .into_iter()
                .map(|n| (n.clone(), reference.join(&n), test.join(&n)))
                .collect())
        }
        _ => Err(Error::Invalid(
            "--ref and --test must both be files or both be directories".into(),
        )),
    }
}
