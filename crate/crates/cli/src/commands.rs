use crate::config::PipelineConfig;
use clap::{Args, Parser, Subcommand};
use qdotkit::bench::{self, HamiltonianSet};
use qdotkit::circuits::{self, CircuitCollection, ComplexityQuery, Protocol};
use qdotkit::clustering::{self, ClusteringConfig, Partition};
use qdotkit::crosstalk::{CoherenceReport, CorrelationMatrix, DistanceMetric};
use qdotkit::marginals::{self, MarginalTable};
use qdotkit::model::{self, CnModel};
use qdotkit::sim::{self, ExperimentRecords};
use qdotkit::{Povm, QubitSubset};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "qdotkit",
    about = "Characterize, model and mitigate correlated readout noise",
    version
)]
pub struct Cli {
    /// Worker threads (falls back to QDOTKIT_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a DDOT/QDOT circuit collection
    GenCircuits(GenCircuitsArgs),
    /// Print the closed-form circuit-count requirements
    Plan(PlanArgs),
    /// Sample readout outcomes from a noise model or quantum POVM blocks
    Simulate(SimulateArgs),
    /// Estimate k-qubit marginal noise matrices from counts
    Estimate(EstimateArgs),
    /// Compute pairwise correlation coefficients from marginals
    Correlations(CorrelationsArgs),
    /// Lower-bound coherence strength from X/Y witness statistics
    CoherenceBound(CoherenceBoundArgs),
    /// Partition qubits into noise clusters
    Cluster(ClusterArgs),
    /// Reconstruct a clusters-and-neighbors noise model
    Reconstruct(ReconstructArgs),
    /// Generate random 2-local Pauli-Z Hamiltonians
    GenHamiltonians(GenHamiltoniansArgs),
    /// Run the energy prediction/mitigation benchmark
    Benchmark(BenchmarkArgs),
    /// Run the whole pipeline from one config file
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct GenCircuitsArgs {
    #[arg(long)]
    protocol: String,
    #[arg(long)]
    qubits: usize,
    #[arg(long)]
    circuits: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// also write one gate-label line per circuit
    #[arg(long)]
    gates_out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    protocol: String,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    qubits: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// planted fixture name or path to a cn_model.json
    #[arg(long, conflicts_with = "povm_block")]
    model: Option<String>,
    /// quantum block "q0[,q1[,q2]]=povm.json"; repeatable
    #[arg(long)]
    povm_block: Vec<String>,
    #[arg(long)]
    circuits: PathBuf,
    #[arg(long)]
    shots: u64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    k: usize,
    /// explicit subsets "0,1;2,3" (default: all C(N,k))
    #[arg(long)]
    subsets: Option<String>,
    /// per-round averaging instead of pooled counts
    #[arg(long)]
    multishot: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrelationsArgs {
    #[arg(long)]
    marginals: PathBuf,
    #[arg(long, default_value = "wc")]
    metric: String,
    #[arg(long, default_value = "classical")]
    kind: String,
    #[arg(long, default_value_t = qdotkit::crosstalk::DEFAULT_CORR_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
    /// also write a DOT graph of above-threshold edges
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct CoherenceBoundArgs {
    #[arg(long)]
    counts: PathBuf,
    /// comma-separated qubit indices
    #[arg(long)]
    subset: String,
    #[arg(long, default_value_t = 0.01)]
    p_err: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    corr: PathBuf,
    #[arg(long)]
    c_max: usize,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    partition: PathBuf,
    /// correlation matrix for neighborhood suggestion
    #[arg(long)]
    corr: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    neighbor_threshold: f64,
    #[arg(long, default_value_t = 0)]
    neighbor_max: usize,
    #[arg(long, default_value_t = 10)]
    min_count: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenHamiltoniansArgs {
    #[arg(long)]
    qubits: usize,
    #[arg(long)]
    instances: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// CN model file
    #[arg(long)]
    model: PathBuf,
    /// tensor-product model file
    #[arg(long)]
    tpn: PathBuf,
    #[arg(long)]
    hamiltonians: PathBuf,
    /// planted fixture name or path to a cn_model.json (the true device)
    #[arg(long)]
    device: String,
    #[arg(long)]
    shots: u64,
    #[arg(long)]
    seed: u64,
    /// CSV report
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report_json: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON or TOML configuration
    #[arg(long)]
    config: PathBuf,
}

enum CliError {
    Validation(String),
    Io(String),
}

impl From<qdotkit::Error> for CliError {
    fn from(e: qdotkit::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(format!("JSON: {e}"))
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Io(format!("TOML: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> i32 {
    let threads = cli.threads.or_else(|| {
        std::env::var("QDOTKIT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", error_json("validation", &format!("thread pool: {e}")));
            return 3;
        }
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Validation(msg)) => {
            eprintln!("{}", error_json("validation", &msg));
            3
        }
        Err(CliError::Io(msg)) => {
            eprintln!("{}", error_json("io", &msg));
            4
        }
    }
}

fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": message, "kind": kind }).to_string()
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::GenCircuits(a) => gen_circuits(a),
        Command::Plan(a) => plan(a),
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Correlations(a) => correlations(a),
        Command::CoherenceBound(a) => coherence_bound(a),
        Command::Cluster(a) => cluster(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::GenHamiltonians(a) => gen_hamiltonians(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn parse_protocol(s: &str) -> CliResult<Protocol> {
    match s.to_ascii_lowercase().as_str() {
        "ddot" => Ok(Protocol::Ddot),
        "qdot" => Ok(Protocol::Qdot),
        other => Err(CliError::Validation(format!(
            "unknown protocol '{other}' (expected ddot or qdot)"
        ))),
    }
}

fn parse_metric(s: &str) -> CliResult<DistanceMetric> {
    match s.to_ascii_lowercase().as_str() {
        "wc" => Ok(DistanceMetric::WorstCase),
        "ac" => Ok(DistanceMetric::AverageCase),
        other => Err(CliError::Validation(format!(
            "unknown metric '{other}' (expected wc or ac)"
        ))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_device(spec: &str) -> CliResult<CnModel> {
    if sim::planted_model_names().contains(&spec) {
        return Ok(sim::planted_model_library(spec)?);
    }
    let path = Path::new(spec);
    if path.exists() {
        return read_json(path);
    }
    Err(CliError::Validation(format!(
        "'{spec}' is neither a planted fixture ({:?}) nor an existing model file",
        sim::planted_model_names()
    )))
}

fn parse_subset_list(s: &str, num_qubits: usize) -> CliResult<Vec<QubitSubset>> {
    s.split(';')
        .filter(|part| !part.trim().is_empty())
        .map(|part| {
            let indices = part
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<usize>().map_err(|_| {
                        CliError::Validation(format!("bad qubit index '{tok}'"))
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(QubitSubset::new(indices, num_qubits)?)
        })
        .collect()
}

fn gen_circuits(a: GenCircuitsArgs) -> CliResult<()> {
    let protocol = parse_protocol(&a.protocol)?;
    let collection = circuits::generate_collection(protocol, a.qubits, a.circuits, a.seed)?;
    write_json(&a.out, &collection)?;
    if let Some(gates) = a.gates_out {
        std::fs::write(gates, circuits::gate_lines(&collection))?;
    }
    Ok(())
}

fn plan(a: PlanArgs) -> CliResult<()> {
    let protocol = parse_protocol(&a.protocol)?;
    let query = ComplexityQuery {
        protocol,
        k: a.k,
        num_qubits: a.qubits,
        epsilon: a.eps,
        delta: a.delta,
    };
    println!("protocol: {protocol}");
    println!(
        "n_mes_matrix_elements: {}",
        circuits::required_circuits_matrix_elements(&query)?
    );
    if protocol == Protocol::Qdot {
        println!("n_mes_choi: {}", circuits::required_circuits_choi(&query)?);
    }
    Ok(())
}

fn parse_povm_blocks(specs: &[String], num_qubits: usize) -> CliResult<sim::QuantumDeviceSpec> {
    let mut blocks = Vec::new();
    for spec in specs {
        let (qubits_part, path) = spec.split_once('=').ok_or_else(|| {
            CliError::Validation(format!(
                "bad --povm-block '{spec}' (expected q0[,q1]=povm.json)"
            ))
        })?;
        let indices = qubits_part
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Validation(format!("bad qubit index '{tok}'")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let povm: Povm = read_json(Path::new(path))?;
        blocks.push(sim::DeviceBlock {
            qubits: QubitSubset::new(indices, num_qubits)?,
            povm,
        });
    }
    Ok(sim::QuantumDeviceSpec::new(num_qubits, blocks)?)
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let collection: CircuitCollection = read_json(&a.circuits)?;
    let records = if !a.povm_block.is_empty() {
        let spec = parse_povm_blocks(&a.povm_block, collection.num_qubits)?;
        sim::sample_quantum(&spec, &collection, a.shots, a.seed)?
    } else {
        let model_spec = a.model.as_deref().ok_or_else(|| {
            CliError::Validation("pass either --model or --povm-block".into())
        })?;
        let model = load_device(model_spec)?;
        sim::sample_cn(&model, &collection, a.shots, a.seed)?
    };
    write_json(&a.out, &records)
}

fn estimate(a: EstimateArgs) -> CliResult<()> {
    let records: ExperimentRecords = read_json(&a.counts)?;
    records.validate()?;
    let subsets = match a.subsets {
        Some(s) => Some(parse_subset_list(&s, records.num_qubits)?),
        None => None,
    };
    let table = if a.multishot {
        marginals::estimate_marginals_multishot(&records, a.k, subsets)?
    } else {
        marginals::estimate_marginals(&records, a.k, subsets)?
    };
    write_json(&a.out, &table)
}

fn correlations(a: CorrelationsArgs) -> CliResult<()> {
    let table: MarginalTable = read_json(&a.marginals)?;
    let metric = parse_metric(&a.metric)?;
    let corr = match a.kind.to_ascii_lowercase().as_str() {
        "classical" => CorrelationMatrix::classical_from_marginals(&table, metric, a.threshold)?,
        "quantum" => {
            let povms = table
                .subsets
                .iter()
                .map(|e| Ok((e.subset.clone(), marginals::povm_from_marginal(e)?)))
                .collect::<Result<Vec<_>, qdotkit::Error>>()?;
            CorrelationMatrix::quantum_from_povms(table.num_qubits, &povms, metric, a.threshold)?
        }
        other => {
            return Err(CliError::Validation(format!(
                "unknown kind '{other}' (expected classical or quantum)"
            )))
        }
    };
    write_json(&a.out, &corr)?;
    if let Some(dot) = a.dot {
        std::fs::write(dot, corr.to_dot())?;
    }
    Ok(())
}

fn coherence_bound(a: CoherenceBoundArgs) -> CliResult<()> {
    let records: ExperimentRecords = read_json(&a.counts)?;
    records.validate()?;
    let indices = a
        .subset
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Validation(format!("bad qubit index '{tok}'")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let subset = QubitSubset::new(indices, records.num_qubits)?;
    let report: CoherenceReport = qdotkit::crosstalk::cs_bound_scan(&records, &subset, a.p_err)?;
    write_json(&a.out, &report)
}

fn cluster(a: ClusterArgs) -> CliResult<()> {
    let corr: CorrelationMatrix = read_json(&a.corr)?;
    let config = ClusteringConfig {
        c_max: a.c_max,
        alpha: a.alpha,
        n_runs: a.runs,
        seed: a.seed,
        ..Default::default()
    };
    let partition = clustering::cluster_qubits(&corr, &config)?;
    write_partition(&a.out, &partition, &corr, &config)
}

#[derive(Serialize)]
struct PartitionFile<'a> {
    num_qubits: usize,
    clusters: &'a [Vec<usize>],
    objective: f64,
    alpha: f64,
    c_max: usize,
    seed: u64,
}

fn write_partition(
    path: &Path,
    partition: &Partition,
    corr: &CorrelationMatrix,
    config: &ClusteringConfig,
) -> CliResult<()> {
    write_json(
        path,
        &PartitionFile {
            num_qubits: partition.num_qubits(),
            clusters: partition.clusters(),
            objective: clustering::objective(partition, corr, config),
            alpha: config.alpha,
            c_max: config.c_max,
            seed: config.seed,
        },
    )
}

fn read_partition(path: &Path) -> CliResult<Partition> {
    #[derive(serde::Deserialize)]
    struct PartitionIn {
        num_qubits: usize,
        clusters: Vec<Vec<usize>>,
    }
    let raw: PartitionIn = read_json(path)?;
    Ok(Partition::new(raw.num_qubits, raw.clusters)?)
}

fn reconstruct(a: ReconstructArgs) -> CliResult<()> {
    let records: ExperimentRecords = read_json(&a.counts)?;
    records.validate()?;
    let partition = read_partition(&a.partition)?;
    let neighborhoods = match (&a.corr, a.neighbor_max) {
        (Some(corr_path), n_max) if n_max > 0 => {
            let corr: CorrelationMatrix = read_json(corr_path)?;
            Some(model::suggest_neighborhoods(
                &corr,
                &partition,
                a.neighbor_threshold,
                n_max,
            )?)
        }
        _ => None,
    };
    let model = model::reconstruct_cn(&records, &partition, neighborhoods.as_ref(), a.min_count)?;
    write_json(&a.out, &model)
}

fn gen_hamiltonians(a: GenHamiltoniansArgs) -> CliResult<()> {
    let instances = bench::random_hamiltonians(a.instances, a.qubits, None, a.seed)?;
    write_json(&a.out, &HamiltonianSet { num_qubits: a.qubits, instances })
}

fn benchmark(a: BenchmarkArgs) -> CliResult<()> {
    let cn: CnModel = read_json(&a.model)?;
    let tpn: CnModel = read_json(&a.tpn)?;
    let set: HamiltonianSet = read_json(&a.hamiltonians)?;
    let device = load_device(&a.device)?;
    let report = bench::run_benchmark(&cn, &tpn, &set.instances, &device, a.shots, a.seed)?;
    if let Some(dir) = a.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&a.out, report.to_csv())?;
    if let Some(json_path) = a.report_json {
        write_json(&json_path, &report)?;
    }
    Ok(())
}

fn pipeline(a: PipelineArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", a.config.display())))?;
    let config: PipelineConfig = match a.config.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text)?,
        _ => serde_json::from_str(&text)?,
    };
    run_pipeline(&config)
}

fn run_pipeline(config: &PipelineConfig) -> CliResult<()> {
    let out = Path::new(&config.out_dir);
    std::fs::create_dir_all(out)?;
    let metric = parse_metric(&config.metric)?;
    let device = load_device(&config.device)?;

    // characterization circuits and synthetic data
    let collection = circuits::generate_collection(
        Protocol::Ddot,
        config.num_qubits,
        config.circuits,
        config.seed_circuits,
    )?;
    write_json(&out.join("circuits.json"), &collection)?;
    let records = sim::sample_cn(&device, &collection, config.shots, config.seed_simulate)?;
    write_json(&out.join("counts.json"), &records)?;

    // marginals and correlations
    let table = marginals::estimate_marginals(&records, config.k, None)?;
    write_json(&out.join("marginals.json"), &table)?;
    let corr = CorrelationMatrix::classical_from_marginals(&table, metric, config.threshold)?;
    write_json(&out.join("corr.json"), &corr)?;
    std::fs::write(out.join("corr.dot"), corr.to_dot())?;

    // clustering and model reconstruction
    let cluster_config = ClusteringConfig {
        c_max: config.c_max,
        alpha: config.alpha,
        n_runs: config.n_runs,
        seed: config.seed_cluster,
        ..Default::default()
    };
    let partition = clustering::cluster_qubits(&corr, &cluster_config)?;
    write_partition(&out.join("partition.json"), &partition, &corr, &cluster_config)?;
    let neighborhoods = if config.neighbor_max > 0 {
        Some(model::suggest_neighborhoods(
            &corr,
            &partition,
            config.neighbor_threshold,
            config.neighbor_max,
        )?)
    } else {
        None
    };
    let cn = model::reconstruct_cn(&records, &partition, neighborhoods.as_ref(), config.min_count)?;
    write_json(&out.join("cn_model.json"), &cn)?;
    let tpn = model::reconstruct_cn(
        &records,
        &Partition::singletons(config.num_qubits),
        None,
        config.min_count,
    )?;
    write_json(&out.join("tpn_model.json"), &tpn)?;

    // benchmark
    let instances = bench::random_hamiltonians(
        config.n_hamiltonians,
        config.num_qubits,
        None,
        config.seed_hamiltonians,
    )?;
    write_json(
        &out.join("hamiltonians.json"),
        &HamiltonianSet { num_qubits: config.num_qubits, instances: instances.clone() },
    )?;
    let report = bench::run_benchmark(
        &cn,
        &tpn,
        &instances,
        &device,
        config.bench_shots,
        config.seed_benchmark,
    )?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;
    write_json(&out.join("report.json"), &report)?;
    Ok(())
}
