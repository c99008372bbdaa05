//! Command-line front end: `simulate`, `fit`, `predict`, `grid`, `roc` and
//! `export`, all reading an optional JSON [`RunConfig`] and writing into
//! `--out`.

mod config;
mod table;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use config::{GridSection, Provenance, RunConfig, SimulationSection, SolverSection, TOOL_VERSION};
pub use table::{read_connectomes, ConnectomeTable};

use crate::connectome::GridParcellation;
use crate::error::{Error, Result};
use crate::eval::{self, GridResult};
use crate::prox::LossKind;
use crate::simulate::{derive_seed, generate_dataset, CohortSidecar};
use crate::solver::{self, Model, Regularizer, Structure, TrainingSet, NNZ_TOL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ssvm", version, about = "Structured sparse SVMs over grid connectomes")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "SSVM_THREADS")]
    pub threads: Option<usize>,
    /// Parcellation JSON, overriding the config.
    #[arg(long, global = true)]
    pub parcellation: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub regularizer: Option<Regularizer>,
    /// hinge | tls | huber:<delta>
    #[arg(long)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test cohorts and the ground-truth sidecar.
    Simulate {
        #[arg(long)]
        n_control: Option<usize>,
        #[arg(long)]
        n_patient: Option<usize>,
        #[arg(long)]
        effect_size: Option<f64>,
    },
    /// Fit one model; writes model.json.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Apply a model; writes predictions.csv.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Cross-validated (lambda, gamma) grid; writes grid_accuracy.csv,
    /// grid_nnz.csv and grid_best.json.
    Grid {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        folds: Option<usize>,
        /// Also refit on all data at the best cell (model.json).
        #[arg(long)]
        refit: bool,
    },
    /// Edge-recovery ROC of one model, or of the median of several.
    Roc {
        #[arg(long, required = true)]
        model: Vec<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Node x node weight matrix and node degrees.
    Export {
        #[arg(long)]
        model: PathBuf,
    },
}

/// `model.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub provenance: Provenance,
    pub model: Model,
}

/// `truth.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub sidecar: CohortSidecar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridBest {
    pub provenance: Provenance,
    pub lambda: f64,
    pub gamma: f64,
    pub accuracy: f64,
    pub mean_nnz: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AucFile {
    pub provenance: Provenance,
    pub auc: f64,
    pub models: usize,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => EXIT_IO,
        Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => EXIT_IO,
        e if e.is_divergence() => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<String> {
    let pool = match cli.common.threads {
        Some(0) => return Err(Error::Config("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n),
        None => rayon::ThreadPoolBuilder::new(),
    }
    .build()
    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::load(cli.common.config.as_deref())?;
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    if let Some(p) = &cli.common.parcellation {
        config.parcellation = Some(p.clone());
    }
    match &cli.command {
        Command::Simulate { n_control, n_patient, effect_size } => {
            let sim = &mut config.simulation;
            if let Some(v) = n_control {
                sim.n_control = *v;
            }
            if let Some(v) = n_patient {
                sim.n_patient = *v;
            }
            if let Some(v) = effect_size {
                sim.effect_size = *v;
            }
        }
        Command::Fit { solver, .. } => apply_solver_args(&mut config.solver, solver),
        Command::Grid { solver, folds, .. } => {
            apply_solver_args(&mut config.solver, solver);
            if let Some(k) = folds {
                config.grid.folds = *k;
            }
        }
        _ => {}
    }
    Ok(config)
}

fn apply_solver_args(s: &mut SolverSection, a: &SolverArgs) {
    if let Some(v) = a.regularizer {
        s.regularizer = v;
    }
    if let Some(v) = a.loss {
        s.loss = v;
    }
    if let Some(v) = a.lambda {
        s.lambda = v;
    }
    if let Some(v) = a.gamma {
        s.gamma = v;
    }
    if let Some(v) = a.epsilon {
        s.epsilon = v;
    }
    if let Some(v) = a.max_iters {
        s.max_iters = v;
    }
}

fn dispatch(cli: &Cli) -> Result<String> {
    let config = resolve(cli)?;
    let out = &cli.common.out;
    fs::create_dir_all(out)?;
    match &cli.command {
        Command::Simulate { .. } => cmd_simulate(&config, out),
        Command::Fit { data, .. } => cmd_fit(&config, data, out),
        Command::Predict { model, data } => cmd_predict(&config, model, data, out),
        Command::Grid { data, refit, .. } => cmd_grid(&config, data, *refit, out),
        Command::Roc { model, truth } => cmd_roc(&config, model, truth, out),
        Command::Export { model } => cmd_export(&config, model, out),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn structure_for(config: &RunConfig, reg: Regularizer, p: usize) -> Result<Option<Structure>> {
    if !reg.is_structured() {
        return Ok(None);
    }
    let parc = config.parcellation()?;
    if parc.feature_dim() != p {
        return Err(Error::Config(format!(
            "data has p = {p} but the parcellation has {} nodes (p = {})",
            parc.node_count(),
            parc.feature_dim()
        )));
    }
    Ok(Some(Structure::new(parc)))
}

fn load_training(path: &Path) -> Result<TrainingSet> {
    let set = read_connectomes(path, None)?.into_training_set()?;
    if set.is_empty() {
        return Err(Error::Config(format!("{}: no rows", path.display())));
    }
    Ok(set)
}

pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<String> {
    let prov = config.provenance();
    let comment = prov.csv_comment();
    let sim = &config.simulation;
    let train_params = config.simulation_params(config.seed)?;
    let test_params = train_params.clone().with_seed(derive_seed(config.seed, "test"));
    let train = generate_dataset(&train_params, sim.n_control, sim.n_patient)?;
    let test = generate_dataset(&test_params, sim.n_test_control, sim.n_test_patient)?;
    let parc = &train_params.parc;

    table::write_dataset(&out.join("train.csv"), &comment, parc, &train.data)?;
    table::write_dataset(&out.join("test.csv"), &comment, parc, &test.data)?;
    let sidecar = CohortSidecar::new(&train_params, sim.n_control, sim.n_patient)?;
    let support = sidecar.ground_truth_support.len();
    write_json(&out.join("truth.json"), &TruthFile { provenance: prov, sidecar })?;
    fs::write(out.join("parcellation.json"), parc.to_json()? + "\n")?;
    Ok(format!(
        "simulated {} train / {} test rows, p = {}, {} anomalous edges",
        train.data.n(),
        test.data.n(),
        parc.feature_dim(),
        support
    ))
}

pub fn cmd_fit(config: &RunConfig, data: &Path, out: &Path) -> Result<String> {
    let solver_config = config.solver_config()?;
    let set = load_training(data)?;
    let structure = structure_for(config, solver_config.regularizer, set.p())?;
    let model = solver::fit(&set, structure.as_ref(), &solver_config)?;
    let summary = format!(
        "{} fit: {} iterations, converged = {}, nnz = {}",
        solver_config.regularizer, model.iterations_run, model.converged, model.nnz
    );
    write_json(&out.join("model.json"), &ModelFile { provenance: config.provenance(), model })?;
    Ok(summary)
}

pub fn cmd_predict(config: &RunConfig, model_path: &Path, data: &Path, out: &Path) -> Result<String> {
    let model = read_json::<ModelFile>(model_path)?.model;
    let table = read_connectomes(data, Some(model.w.len()))?;
    let mut csv = table::CsvOut::create(&out.join("predictions.csv"), &config.provenance().csv_comment())?;
    let mut header = vec!["row", "decision_value", "predicted"];
    if table.labels.is_some() {
        header.push("label");
    }
    csv.row(header)?;
    let mut correct = 0;
    for (i, row) in table.rows.iter().enumerate() {
        let f = model.decision_value(row)?;
        let pred = model.predict(row)?;
        let mut fields = vec![i.to_string(), f.to_string(), table::format_label(pred)];
        if let Some(labels) = &table.labels {
            fields.push(table::format_label(labels[i]));
            correct += usize::from(labels[i] == pred);
        }
        csv.row(fields)?;
    }
    csv.finish()?;
    Ok(match &table.labels {
        Some(_) if !table.rows.is_empty() => format!(
            "predicted {} rows, accuracy = {:.4}",
            table.rows.len(),
            correct as f64 / table.rows.len() as f64
        ),
        _ => format!("predicted {} rows", table.rows.len()),
    })
}

pub fn cmd_grid(config: &RunConfig, data: &Path, refit: bool, out: &Path) -> Result<String> {
    let base = config.solver_config()?;
    let spec = config.grid_spec()?;
    let set = load_training(data)?;
    let structure = structure_for(config, base.regularizer, set.p())?;
    let mut quiet = base.clone();
    quiet.record_objective = false;
    let result: GridResult = eval::grid_search(&set, structure.as_ref(), &spec, &quiet)?;

    let prov = config.provenance();
    let comment = prov.csv_comment();
    let corner = "lambda\\gamma";
    table::write_matrix(&out.join("grid_accuracy.csv"), &comment, corner, &result.lambdas, &result.gammas, &result.accuracy)?;
    table::write_matrix(&out.join("grid_nnz.csv"), &comment, corner, &result.lambdas, &result.gammas, &result.mean_nnz)?;
    let (lambda, gamma) = result.best_params();
    let (bi, bj) = result.best_cell;
    write_json(
        &out.join("grid_best.json"),
        &GridBest { provenance: prov.clone(), lambda, gamma, accuracy: result.best_accuracy(), mean_nnz: result.mean_nnz[bi][bj] },
    )?;
    if refit {
        let mut c = base;
        c.lambda = lambda;
        c.gamma = gamma;
        let model = solver::fit(&set, structure.as_ref(), &c)?;
        write_json(&out.join("model.json"), &ModelFile { provenance: prov, model })?;
    }
    Ok(format!(
        "grid {}x{}: best lambda = {lambda:e}, gamma = {gamma:e}, cv accuracy = {:.4}",
        result.lambdas.len(),
        result.gammas.len(),
        result.best_accuracy()
    ))
}

pub fn cmd_roc(config: &RunConfig, models: &[PathBuf], truth: &Path, out: &Path) -> Result<String> {
    let weights: Vec<Vec<f64>> =
        models.iter().map(|m| read_json::<ModelFile>(m).map(|f| f.model.w)).collect::<Result<_>>()?;
    let w = eval::median_weight(&weights).map_err(|e| Error::Config(e.to_string()))?;
    let sidecar = read_json::<TruthFile>(truth)?.sidecar;
    let mut flags = vec![false; w.len()];
    for &j in &sidecar.ground_truth_support {
        *flags.get_mut(j).ok_or_else(|| Error::Config(format!("truth index {j} out of range for p = {}", w.len())))? =
            true;
    }
    let roc = eval::roc_edge_recovery(&w, &flags)?;
    let prov = config.provenance();
    let mut csv = table::CsvOut::create(&out.join("roc.csv"), &prov.csv_comment())?;
    csv.row(["threshold", "fpr", "tpr"])?;
    for pt in &roc.points {
        csv.row([pt.threshold.to_string(), pt.fpr.to_string(), pt.tpr.to_string()])?;
    }
    csv.finish()?;
    write_json(&out.join("auc.json"), &AucFile { provenance: prov, auc: roc.auc, models: models.len() })?;
    Ok(format!("auc = {:.4} over {} model(s)", roc.auc, models.len()))
}

pub fn cmd_export(config: &RunConfig, model_path: &Path, out: &Path) -> Result<String> {
    let model = read_json::<ModelFile>(model_path)?.model;
    let parc: GridParcellation = config.parcellation()?;
    if parc.feature_dim() != model.w.len() {
        return Err(Error::Config(format!(
            "model has p = {} but the parcellation has p = {}",
            model.w.len(),
            parc.feature_dim()
        )));
    }
    let d = parc.node_count();
    let mut matrix = vec![vec![0.0; d]; d];
    for (j, &v) in model.w.iter().enumerate() {
        if v.abs() > NNZ_TOL {
            let (a, b) = parc.edge_nodes(j)?;
            matrix[a][b] = v;
            matrix[b][a] = v;
        }
    }
    let comment = config.provenance().csv_comment();
    let mut csv = table::CsvOut::create(&out.join("weights.csv"), &comment)?;
    csv.row(std::iter::once("node".to_string()).chain((0..d).map(|k| k.to_string())))?;
    for (a, row) in matrix.iter().enumerate() {
        csv.row(std::iter::once(a.to_string()).chain(row.iter().map(|v| v.to_string())))?;
    }
    csv.finish()?;

    let degree = eval::node_degree(&model.w, &parc)?;
    let mut csv = table::CsvOut::create(&out.join("degree.csv"), &comment)?;
    csv.row(["node", "x", "y", "z", "degree"])?;
    for (node, deg) in degree.iter().enumerate() {
        let [x, y, z] = parc.node_coords(node);
        csv.row([node.to_string(), x.to_string(), y.to_string(), z.to_string(), deg.to_string()])?;
    }
    csv.finish()?;
    let active = degree.iter().filter(|&&k| k > 0).count();
    Ok(format!("exported {d}x{d} weights, {} edges over {active} nodes", model.nnz))
}
