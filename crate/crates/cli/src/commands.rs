use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fbg_tpe::eval::{compare, ComparisonTable, Dataset, GroundTruth, Method, Protocol};
use fbg_tpe::io::{self, OutputDir, RunManifest};
use fbg_tpe::regression::{assemble, train, NodeSelection, Preprocessing};
use fbg_tpe::shape::{reconstruct, CenterlineShift, ConventionalOptions};
use fbg_tpe::{align_streams, simulate, BendingScenario, FiberSet, Interpolation, SensorGeometry};
use nalgebra::Vector3;

use crate::{
    AgainstArg, AlignArgs, Cli, Command, CompareArgs, DataArgs, EvaluateArgs, InterpolationArg, PredictArgs,
    ProtocolArgs, ReconstructArgs, ShiftArg, SimulateArgs, TrainArgs,
};

pub const GEOMETRY_FILE: &str = "geometry.toml";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const ESTIMATOR_GEOMETRY_FILE: &str = "geometry_estimator.toml";

pub fn run(cli: Cli) -> Result<()> {
    let config = cli.config_dir.as_deref();
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, config),
        Command::Align(a) => cmd_align(a, config),
        Command::Reconstruct(a) => cmd_reconstruct(a, config),
        Command::Train(a) => cmd_train(a, config),
        Command::Predict(a) => cmd_predict(a, config),
        Command::Evaluate(a) => cmd_evaluate(a, config),
        Command::Compare(a) => cmd_compare(a, config),
    }
}

fn config_file(config: Option<&Path>, name: &str) -> Option<PathBuf> {
    config.map(|d| d.join(name)).filter(|p| p.is_file())
}

/// Explicit path, then the fallback, then the config directory.
fn geometry_path(explicit: Option<&Path>, fallback: Option<PathBuf>, config: Option<&Path>) -> Result<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or(fallback.filter(|p| p.is_file()))
        .or_else(|| config_file(config, GEOMETRY_FILE))
        .ok_or_else(|| {
            anyhow!(fbg_tpe::Error::InvalidArgument(
                "no geometry given: pass --geometry or set FBG_TPE_CONFIG_DIR".into()
            ))
        })
}

fn load_geometry(path: &Path, manifest: &mut RunManifest) -> Result<SensorGeometry> {
    let geom = io::load_geometry(path)?;
    manifest.input(path)?;
    manifest.geometry_fingerprint = Some(geom.fingerprint());
    Ok(geom)
}

fn cmd_simulate(a: SimulateArgs, config: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("simulate");
    let scenario_path = a.scenario.clone().or_else(|| config_file(config, SCENARIO_FILE));
    let mut scenario = match &scenario_path {
        Some(p) => {
            manifest.input(p)?;
            io::load_scenario(p)?
        }
        None => BendingScenario::default(),
    };
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    let geom_path = a
        .geometry
        .geometry
        .clone()
        .or_else(|| config_file(config, GEOMETRY_FILE));
    let geom = match &geom_path {
        Some(p) => load_geometry(p, &mut manifest)?,
        None => SensorGeometry::nominal(),
    };
    manifest.geometry_fingerprint = Some(geom.fingerprint());
    manifest.seeds.push(scenario.seed);
    manifest
        .arg("scenario", display_opt(&scenario_path, "built-in"))
        .arg("geometry", display_opt(&geom_path, "nominal"))
        .arg("seed", scenario.seed);

    let sim = simulate(&scenario, &geom).context("simulation")?;
    let tips = sim.registration.to_base(&sim.tracker, &sim.estimator_geometry)?;
    let alignment = align_streams(&sim.fbg, &tips, Interpolation::Linear).context("alignment")?;

    let mut out = OutputDir::create(&a.out, manifest)?;
    out.write("wavelengths.csv", &io::wavelengths_to_csv(&sim.fbg))?;
    out.write("tracker.csv", &io::tracker_to_csv(&sim.tracker))?;
    out.write("truth.csv", &io::tips_to_csv(&sim.truth))?;
    out.write("aligned.csv", &io::aligned_to_csv(&alignment.pairs))?;
    out.write("geometry_true.toml", &sim.true_geometry.to_toml_string())?;
    out.write(ESTIMATOR_GEOMETRY_FILE, &sim.estimator_geometry.to_toml_string())?;
    out.write("transforms.toml", &io::registration_to_toml(&sim.registration))?;
    out.write(SCENARIO_FILE, &io::scenario_to_toml(&scenario))?;
    out.finish()?;
    println!(
        "simulated {} wavelength frames, {} tracker samples ({} aligned) into {}",
        sim.fbg.len(),
        sim.tracker.len(),
        alignment.pairs.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_align(a: AlignArgs, config: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("align");
    let geom = load_geometry(
        &geometry_path(a.geometry.geometry.as_deref(), None, config)?,
        &mut manifest,
    )?;
    let fbg = io::read_wavelengths(&a.fbg, Some(geom.node_count()))?;
    let tracker = io::read_tracker(&a.tracker)?;
    let registration = io::load_registration(&a.transforms)?;
    for p in [&a.fbg, &a.tracker, &a.transforms] {
        manifest.input(p)?;
    }
    let mode = match a.interpolation {
        InterpolationArg::Linear => Interpolation::Linear,
        InterpolationArg::Nearest => Interpolation::Nearest,
    };
    manifest.arg("interpolation", format!("{mode:?}").to_lowercase());
    let tips = registration.to_base(&tracker, &geom).context("frame chain")?;
    let alignment = align_streams(&fbg, &tips, mode).context("alignment")?;
    let mut out = OutputDir::create(&a.out, manifest)?;
    out.write("aligned.csv", &io::aligned_to_csv(&alignment.pairs))?;
    out.write("tips.csv", &io::tips_to_csv(&tips))?;
    out.finish()?;
    println!(
        "aligned {} pairs ({} tracker samples outside the wavelength stream)",
        alignment.pairs.len(),
        alignment.dropped
    );
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs, config: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("reconstruct");
    let geom = load_geometry(
        &geometry_path(a.geometry.geometry.as_deref(), None, config)?,
        &mut manifest,
    )?;
    let frames = io::read_wavelengths(&a.input, Some(geom.node_count()))?;
    manifest.input(&a.input)?;
    let opts = ConventionalOptions {
        n_segments: a.segments,
        model_order: a.order,
        shift: match a.shift {
            ShiftArg::SensorChannel => CenterlineShift::SensorChannel,
            ShiftArg::BendPlane => CenterlineShift::BendPlane,
        },
    };
    manifest
        .arg("segments", a.segments)
        .arg("order", a.order)
        .arg("shift", format!("{:?}", opts.shift));

    let mut shapes = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let rec = reconstruct(frame, &geom, &opts).with_context(|| format!("frame {i} (t = {} s)", frame.timestamp))?;
        shapes.push(rec.centerline);
    }
    let tips = frames
        .iter()
        .zip(&shapes)
        .map(|(f, s)| (f.timestamp, *s.last().expect("non-empty center-line")));
    let mut out = OutputDir::create(&a.out, manifest)?;
    out.write("tips.csv", &io::points_to_csv(tips))?;
    out.write("shapes.csv", &io::polylines_to_csv(shapes.iter().map(Vec::as_slice)))?;
    out.finish()?;
    println!("reconstructed {} frames with {} segments", frames.len(), a.segments);
    Ok(())
}

fn cmd_train(a: TrainArgs, config: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("train");
    let geom = load_geometry(
        &geometry_path(a.geometry.geometry.as_deref(), None, config)?,
        &mut manifest,
    )?;
    let pairs = io::read_aligned(&a.input, Some(geom.node_count()))?;
    manifest.input(&a.input)?;
    let fibers = FiberSet::parse(&a.model.fibers)?;
    let selection = NodeSelection::from_fibers(&geom, &fibers)?;
    let preprocessing = if a.model.delta {
        Preprocessing::delta_from_geometry(&geom)
    } else {
        Preprocessing::Raw
    };
    manifest
        .arg("fibers", &fibers)
        .arg("bias", a.model.bias())
        .arg("preprocessing", if a.model.delta { "delta" } else { "raw" });
    let ts = assemble(&pairs, &selection, a.model.bias(), &preprocessing).context("assemble")?;
    let mut model = train(&ts).context("train")?;
    model.geometry_fingerprint = Some(geom.fingerprint());
    let mut out = OutputDir::create(&a.out, manifest)?;
    out.write("model.toml", &io::model_to_toml(&model))?;
    out.finish()?;
    println!(
        "trained on {} pairs ({} columns, rank {}): residual {:.4} mm, condition {:.3e}",
        model.samples,
        model.columns(),
        model.rank,
        model.training_residual,
        model.condition_estimate
    );
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs, config: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("predict");
    let model = io::load_model(&a.model)?;
    manifest.input(&a.model)?;
    let geom = load_geometry(
        &geometry_path(a.geometry.geometry.as_deref(), None, config)?,
        &mut manifest,
    )?;
    let supplied = geom.fingerprint();
    match &model.geometry_fingerprint {
        Some(fp) if *fp != supplied => {
            return Err(fbg_tpe::Error::FingerprintMismatch {
                model: fp.clone(),
                supplied,
            })
            .context("refusing to apply the model to a different sensor");
        }
        Some(_) => {}
        None => eprintln!("warning: model carries no geometry fingerprint; geometry not checked"),
    }
    let frames = io::read_wavelengths(&a.input, Some(model.selection.total_nodes))?;
    manifest.input(&a.input)?;
    let tips = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = fbg_tpe::predict(&model, f).with_context(|| format!("frame {i}"))?;
            Ok((f.timestamp, p))
        })
        .collect::<Result<Vec<(f64, Vector3<f64>)>>>()?;
    let mut out = OutputDir::create(&a.out, manifest)?;
    out.write("tips.csv", &io::points_to_csv(tips))?;
    out.finish()?;
    println!("predicted {} tips", frames.len());
    Ok(())
}

fn load_dataset(d: &DataArgs, config: Option<&Path>, manifest: &mut RunManifest) -> Result<Dataset> {
    let (aligned, truth, fallback) = match (&d.data, &d.aligned) {
        (Some(dir), _) => {
            let truth = Some(dir.join("truth.csv")).filter(|p| p.is_file());
            (dir.join("aligned.csv"), truth, Some(dir.join(ESTIMATOR_GEOMETRY_FILE)))
        }
        (None, Some(file)) => (file.clone(), d.truth.clone(), None),
        (None, None) => bail!(fbg_tpe::Error::InvalidArgument("pass --data or --aligned".into())),
    };
    let geom = load_geometry(
        &geometry_path(d.geometry.geometry.as_deref(), fallback, config)?,
        manifest,
    )?;
    let pairs = io::read_aligned(&aligned, Some(geom.node_count()))?;
    manifest.input(&aligned)?;
    let truth = match truth {
        Some(path) => {
            let tips = io::read_tips(&path)?;
            manifest.input(&path)?;
            let by_time: HashMap<u64, Vector3<f64>> =
                tips.iter().map(|t| (t.timestamp.to_bits(), t.position)).collect();
            let matched = pairs
                .iter()
                .map(|p| {
                    by_time.get(&p.timestamp.to_bits()).copied().ok_or_else(|| {
                        anyhow!(fbg_tpe::Error::InvalidArgument(format!(
                            "{}: no exact tip at t = {}",
                            path.display(),
                            p.timestamp
                        )))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(matched)
        }
        None => None,
    };
    Ok(Dataset::new(pairs, truth, geom)?)
}

fn protocol(p: &ProtocolArgs, bias: bool, preprocessing: Preprocessing, manifest: &mut RunManifest) -> Protocol {
    let ground_truth = match p.against {
        AgainstArg::Exact => GroundTruth::Exact,
        AgainstArg::Tracker => GroundTruth::Tracker,
    };
    manifest
        .arg("train_fraction", p.train_fraction)
        .arg("repeats", p.repeats)
        .arg("seed", p.seed)
        .arg("segments", p.segments)
        .arg("against", format!("{ground_truth:?}").to_lowercase())
        .arg("bias", bias);
    manifest.seeds = (0..p.repeats as u64).map(|i| p.seed.wrapping_add(i)).collect();
    Protocol {
        train_fraction: p.train_fraction,
        repeats: p.repeats,
        base_seed: p.seed,
        bias,
        preprocessing,
        conventional: ConventionalOptions {
            n_segments: p.segments,
            ..ConventionalOptions::default()
        },
        ground_truth,
    }
}

fn write_reports(table: &ComparisonTable, dataset: &Dataset, out_dir: &Path, manifest: RunManifest) -> Result<()> {
    let text = table.to_text();
    let mut out = OutputDir::create(out_dir, manifest)?;
    out.write("report.txt", &text)?;
    out.write("report.json", &table.to_json())?;
    out.write("samples.csv", &table.samples_csv(dataset))?;
    out.finish()?;
    print!("{text}");
    let failures: Vec<_> = table.outcomes.iter().filter_map(|o| o.result.as_ref().err()).collect();
    if let Some(first) = failures.first() {
        return Err(anyhow!(fbg_tpe::Error::Stage {
            stage: "compare",
            source: Box::new(clone_error(first)),
        }))
        .context(format!("{} method(s) failed", failures.len()));
    }
    Ok(())
}

/// Core errors are not `Clone`; keep the message and exit class.
fn clone_error(e: &fbg_tpe::Error) -> fbg_tpe::Error {
    match e.kind() {
        fbg_tpe::ErrorKind::Numerical => fbg_tpe::Error::Integration(e.to_string()),
        fbg_tpe::ErrorKind::Data => fbg_tpe::Error::InvalidArgument(e.to_string()),
    }
}

fn cmd_evaluate(a: EvaluateArgs, config: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("evaluate");
    let dataset = load_dataset(&a.data, config, &mut manifest)?;
    let method = match a.method.as_str() {
        "regression" => Method::Regression(FiberSet::parse(&a.model.fibers)?),
        other => Method::parse(other)?,
    };
    manifest.arg("method", method.label());
    let preprocessing = if a.model.delta {
        Preprocessing::delta_from_geometry(&dataset.geometry)
    } else {
        Preprocessing::Raw
    };
    manifest.arg("preprocessing", if a.model.delta { "delta" } else { "raw" });
    let protocol = protocol(&a.protocol, a.model.bias(), preprocessing, &mut manifest);
    let table = compare(&dataset, &[method], &protocol);
    write_reports(&table, &dataset, &a.out, manifest)
}

fn cmd_compare(a: CompareArgs, config: Option<&Path>) -> Result<()> {
    let mut manifest = RunManifest::new("compare");
    let dataset = load_dataset(&a.data, config, &mut manifest)?;
    let methods = a
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<fbg_tpe::Result<Vec<_>>>()?;
    manifest.arg(
        "methods",
        methods.iter().map(Method::label).collect::<Vec<_>>().join(","),
    );
    let protocol = protocol(&a.protocol, !a.no_bias, Preprocessing::Raw, &mut manifest);
    let table = compare(&dataset, &methods, &protocol);
    write_reports(&table, &dataset, &a.out, manifest)
}

fn display_opt(p: &Option<PathBuf>, default: &str) -> String {
    p.as_ref()
        .map_or_else(|| default.to_string(), |p| p.display().to_string())
}
