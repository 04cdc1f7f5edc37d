use std::path::{Path, PathBuf};

use scatterkit::dataset::{generate_training_set, sha256_file};
use scatterkit::forward::{add_noise, ForwardSolver};
use scatterkit::imaging::imaging_matrix;
use scatterkit::inversion::{contrast_error, reconstruct, Method};
use scatterkit::io;
use scatterkit::support::{extract_support, support_of, NetworkWeights, SupportExtractor, CLASSICAL_GAMMA};
use scatterkit::{ContrastField, DirectionSet, Grid};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{Algorithm, CliError, Command, Extractor};

pub fn dispatch(command: Command, mut cfg: RunConfig) -> Result<(), CliError> {
    match command {
        Command::GenData {
            out,
            count,
            train,
            seed,
            delta,
        } => {
            set(&mut cfg.dataset.count, count);
            if train.is_some() {
                cfg.dataset.train = train;
            }
            set(&mut cfg.dataset.seed, seed);
            set(&mut cfg.delta, delta);
            let manifest = generate_training_set(&cfg.dataset(), &out)?;
            println!(
                "{} samples in {} ({} train / {} validation)",
                manifest.samples.len(),
                out.display(),
                manifest.train.len(),
                manifest.validation.len()
            );
            Ok(())
        }
        Command::Simulate {
            truth,
            out,
            k,
            p,
            q,
            delta,
            seed,
        } => {
            set(&mut cfg.reconstruction.k, k);
            set(&mut cfg.p1, p);
            set(&mut cfg.q1, q);
            set(&mut cfg.delta, delta);
            set(&mut cfg.seed, seed);
            let m: ContrastField<f64> = io::load_contrast(&truth)?;
            let solver = ForwardSolver::new(*m.grid(), cfg.reconstruction.k, cfg.reconstruction.solver)?;
            let clean = solver.far_field(&m, DirectionSet::new(cfg.q1)?, DirectionSet::new(cfg.p1)?)?;
            let data = add_noise(&clean, cfg.delta, cfg.seed)?;
            io::save_far_field(&out, &data, Some(cfg.seed))?;
            let args = json!({"k": cfg.reconstruction.k, "P": cfg.p1, "Q": cfg.q1, "delta": cfg.delta, "seed": cfg.seed});
            write_manifest("simulate", &cfg, args, &[&truth], &out, &[])
        }
        Command::Image { data, out, n } => {
            set(&mut cfg.n_inv, n);
            let u = io::load_far_field::<f64>(&data)?;
            let grid = Grid::new(cfg.rho, cfg.n_inv)?;
            let img = imaging_matrix(&u, &grid);
            io::save_imaging(&out, &img, &u)?;
            write_manifest("image", &cfg, json!({"rho": cfg.rho, "n": cfg.n_inv}), &[&data], &out, &[])
        }
        Command::Extract {
            image,
            out,
            method,
            gamma,
            weights,
            truth,
        } => {
            let img = io::load_imaging::<f64>(&image)?;
            let mut inputs = vec![image.clone()];
            let (extractor, gamma) = match method {
                Extractor::Classical => {
                    let g = gamma.unwrap_or(CLASSICAL_GAMMA);
                    (SupportExtractor::Classical { gamma: g }, Some(g))
                }
                Extractor::Neural => {
                    let path = weights.ok_or_else(|| CliError::Config("--method neural needs --weights".into()))?;
                    let g = gamma.unwrap_or(cfg.reconstruction.gamma);
                    let w = NetworkWeights::read(&path)?;
                    inputs.push(path);
                    (SupportExtractor::neural(w, g)?, Some(g))
                }
                Extractor::Oracle => {
                    let path = truth.ok_or_else(|| CliError::Config("--method oracle needs --truth".into()))?;
                    let m: ContrastField<f64> = io::load_contrast(&path)?;
                    inputs.push(path);
                    (SupportExtractor::Oracle(support_of(&m)), None)
                }
            };
            let mask = extract_support(&extractor, &img)?;
            let args = json!({"method": format!("{method:?}").to_lowercase(), "gamma": gamma});
            io::save_mask(&out, &mask, args.clone())?;
            let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            write_manifest("extract", &cfg, args, &refs, &out, &[])
        }
        Command::Reconstruct {
            data,
            out,
            algorithm,
            mask,
            truth,
            iters,
            mu,
            lambda,
            n,
        } => {
            set(&mut cfg.reconstruction.mu, mu);
            set(&mut cfg.reconstruction.lambda, lambda);
            set(&mut cfg.n_inv, n);
            if let Some(i) = iters {
                cfg.reconstruction.iters_projected = i;
                cfg.reconstruction.iters_variational = i;
            }
            let u = io::load_far_field::<f64>(&data)?;
            let mut inputs = vec![data.clone()];
            let mask = match &mask {
                Some(p) => {
                    inputs.push(p.clone());
                    Some(io::load_mask::<f64>(p)?)
                }
                None => None,
            };
            let grid = match &mask {
                Some(s) => *s.grid(),
                None => Grid::new(cfg.rho, cfg.n_inv)?,
            };
            let need_mask = || CliError::Config(format!("--algorithm {algorithm:?} needs --mask").to_lowercase());
            let (method, iterations) = match algorithm {
                Algorithm::Landweber => (Method::Landweber, cfg.reconstruction.iters_projected),
                Algorithm::Projected => (Method::Projected(mask.ok_or_else(need_mask)?), cfg.reconstruction.iters_projected),
                Algorithm::Variational => {
                    (Method::Variational(mask.ok_or_else(need_mask)?), cfg.reconstruction.iters_variational)
                }
            };
            let truth_field = match &truth {
                Some(p) => {
                    inputs.push(p.clone());
                    Some(io::load_contrast::<f64>(p)?)
                }
                None => None,
            };
            let (m, trace) = reconstruct(&u, grid, &method, iterations, &cfg.reconstruction, truth_field.as_ref(), |i, _| {
                log::info!("iteration {i}/{iterations}")
            })?;
            let args = json!({"algorithm": format!("{algorithm:?}").to_lowercase(), "iterations": iterations});
            io::save_contrast(&out, &m, args.clone())?;
            let trace_path = with_suffix(&out, ".trace.csv");
            io::write_atomic(&trace_path, trace.to_csv().as_bytes())?;
            let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            write_manifest("reconstruct", &cfg, args, &refs, &out, &[&trace_path])
        }
        Command::Eval {
            reconstruction,
            truth,
            report,
        } => {
            let hat: ContrastField<f64> = io::load_contrast(&reconstruction)?;
            let t: ContrastField<f64> = io::load_contrast(&truth)?;
            let e = contrast_error(&t, &hat)?;
            println!("{e}");
            if let Some(report) = report {
                use std::io::Write;
                let fresh = !report.exists();
                let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&report)?;
                if fresh {
                    writeln!(f, "reconstruction,truth,relative_error")?;
                }
                writeln!(f, "{},{},{e:?}", reconstruction.display(), truth.display())?;
            }
            Ok(())
        }
        Command::Export { input, out } => {
            let (m, _) = io::read_any(&input)?;
            let values = io::plot_values(&m);
            match out.extension().and_then(|e| e.to_str()) {
                Some("pgm") => io::export_pgm(&out, &values, &input.display().to_string())?,
                Some("csv") => io::export_csv(&out, &values)?,
                _ => return Err(CliError::Config(format!("{}: output must end in .pgm or .csv", out.display()))),
            }
            Ok(())
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn hashes(paths: &[&Path]) -> Result<Value, CliError> {
    let mut map = serde_json::Map::new();
    for p in paths {
        map.insert(p.display().to_string(), json!(sha256_file(p)?));
    }
    Ok(Value::Object(map))
}

/// `<out>.manifest.json`: enough to re-run the command.
fn write_manifest(
    command: &str,
    cfg: &RunConfig,
    args: Value,
    inputs: &[&Path],
    out: &Path,
    extra_outputs: &[&Path],
) -> Result<(), CliError> {
    let mut outputs = vec![out];
    outputs.extend_from_slice(extra_outputs);
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
        "config": cfg,
        "inputs": hashes(inputs)?,
        "outputs": hashes(&outputs)?,
    });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    io::write_atomic(&with_suffix(out, ".manifest.json"), text.as_bytes())?;
    Ok(())
}
