//! `onl-lab`: generate spaces, build certificates and run localization and
//! equivalence experiments from the command line.
//!
//! Exit codes: 0 success, 2 usage or parameter errors, 3 data or validation
//! errors, 4 failed verification.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use onl_core::certificates::{
    self, ball_indicator_certificate, check_positive_definite, kernel_deviation, tree_ray_certificate, vector_deviation,
    vector_to_kernel, Certificate, CertificateFile, PsdCheck,
};
use onl_core::duality::{self, CertificateSource, EquivalenceConfig, EquivalenceReport};
use onl_core::localization::{self, OnlProfile, OnlProfileConfig, SampleMode};
use onl_core::space::{DistanceTable, Family, SpaceSource};
use onl_core::{BandedOperator, Error, Field, FiniteMetricSpace};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let text = e.to_string();
        match e {
            Error::InvalidParams(_) | Error::InvalidRadii { .. } | Error::RadiusMismatch { .. } => CliError::Usage(text),
            Error::ConvergenceFailure { .. } | Error::DegenerateWitness { .. } => CliError::Verification(text),
            _ => CliError::Data(text),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "onl-lab", version, about = "Property A and operator norm localization experiments")]
struct Cli {
    /// Run seed; required wherever sampling occurs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tolerance override for positive semidefiniteness checks.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate or validate metric spaces.
    Space {
        #[command(subcommand)]
        action: SpaceCommand,
    },
    /// Localization profiles.
    Onl {
        #[command(subcommand)]
        action: OnlCommand,
    },
    /// Build or check certificates.
    Cert {
        #[command(subcommand)]
        action: CertCommand,
    },
    /// Equivalence experiments.
    Equiv {
        #[command(subcommand)]
        action: EquivCommand,
    },
    /// Amplification consistency checks.
    Cb {
        #[command(subcommand)]
        action: CbCommand,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Kind {
    Cycle,
    Path,
    Grid,
    BinaryTree,
    RandomRegular,
}

#[derive(Debug, Subcommand)]
enum SpaceCommand {
    Gen(SpaceGen),
    Validate { file: PathBuf },
}

#[derive(Debug, Args)]
struct SpaceGen {
    #[arg(long)]
    kind: Kind,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    deg: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Random,
    Identity,
}

#[derive(Debug, Subcommand)]
enum OnlCommand {
    Profile(OnlProfileArgs),
}

#[derive(Debug, Args)]
struct OnlProfileArgs {
    #[arg(long)]
    space: PathBuf,
    /// Comma-separated propagation radii.
    #[arg(long = "R", value_delimiter = ',', required = true)]
    r: Vec<f64>,
    /// Comma-separated ball radii.
    #[arg(long = "S", value_delimiter = ',', required = true)]
    s: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 200)]
    budget: usize,
    #[arg(long, value_enum, default_value_t = Mode::Random)]
    mode: Mode,
    #[arg(long, default_value = "complex", value_parser = parse_field)]
    field: Field,
    /// Include the adjacency operator as a probe.
    #[arg(long)]
    probe_adjacency: bool,
    /// Vector certificate attaching a certified lower bound.
    #[arg(long)]
    cert: Option<PathBuf>,
    /// Write JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

fn parse_field(s: &str) -> Result<Field, String> {
    match s {
        "real" => Ok(Field::Real),
        "complex" => Ok(Field::Complex),
        other => Err(format!("unknown field {other:?} (expected real or complex)")),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum CertKind {
    Ball,
    TreeRay,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CertForm {
    Subset,
    Vector,
    Kernel,
}

#[derive(Debug, Subcommand)]
enum CertCommand {
    Build(CertBuild),
    Check(CertCheck),
}

#[derive(Debug, Args)]
struct CertBuild {
    #[arg(long)]
    space: PathBuf,
    #[arg(long, value_enum)]
    kind: CertKind,
    /// Ball radius for ball certificates.
    #[arg(long = "S")]
    s: Option<f64>,
    #[arg(long, default_value_t = 0)]
    root: usize,
    /// Segment length for tree-ray certificates.
    #[arg(long = "L")]
    length: Option<usize>,
    #[arg(long, value_enum, default_value_t = CertForm::Vector)]
    form: CertForm,
}

#[derive(Debug, Args)]
struct CertCheck {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    cert: PathBuf,
    #[arg(long = "R", default_value_t = 1.0)]
    r: f64,
}

#[derive(Debug, Subcommand)]
enum EquivCommand {
    Run(EquivRun),
}

#[derive(Debug, Args)]
struct EquivRun {
    #[arg(long)]
    space: PathBuf,
    #[arg(long = "R")]
    r: f64,
    #[arg(long = "S")]
    s: f64,
    /// `ball`, `tree_ray` or a certificate file.
    #[arg(long, default_value = "ball")]
    cert: String,
    #[arg(long, default_value_t = 0)]
    root: usize,
    #[arg(long = "L")]
    length: Option<usize>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 200)]
    budget: usize,
    /// Also write the CSV summary row here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum CbCommand {
    Check(CbCheck),
}

#[derive(Debug, Args)]
struct CbCheck {
    #[arg(long)]
    space: PathBuf,
    #[arg(long = "R")]
    r: f64,
    #[arg(long = "S")]
    s: f64,
    /// Amplification multiplicity.
    #[arg(long = "n", default_value_t = 2)]
    amplification: usize,
    #[arg(long, default_value_t = 100)]
    samples: usize,
}

struct Context {
    seed: Option<u64>,
    tol: Option<f64>,
    out: Option<PathBuf>,
    stdout: Vec<u8>,
}

impl Context {
    fn seed(&self) -> CliResult<u64> {
        self.seed.ok_or_else(|| CliError::Usage("--seed is required for this command".into()))
    }

    fn emit(&mut self, bytes: &[u8]) -> CliResult<()> {
        match &self.out {
            Some(path) => write_atomic(path, bytes),
            None => {
                self.stdout.extend_from_slice(bytes);
                Ok(())
            }
        }
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let fail = |e: std::io::Error| CliError::Data(format!("writing {}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn to_csv(header: &[&str], rows: &[Vec<String>]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record(header).map_err(fail)?;
    for row in rows {
        w.write_record(row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

fn read_space(path: &Path) -> CliResult<Arc<FiniteMetricSpace>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
    let source: SpaceSource =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("parsing {}: {e}", path.display())))?;
    Ok(Arc::new(source.into_space()?))
}

fn read_certificate(path: &Path, space: &Arc<FiniteMetricSpace>) -> CliResult<Certificate> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
    let file: CertificateFile =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("parsing {}: {e}", path.display())))?;
    Ok(file.into_certificate(space.clone())?)
}

fn file_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn require<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("{flag} is required")))
}

fn space_gen(ctx: &mut Context, args: &SpaceGen) -> CliResult<()> {
    let family = match args.kind {
        Kind::Cycle => Family::Cycle { n: require(args.n, "--n")? },
        Kind::Path => Family::Path { n: require(args.n, "--n")? },
        Kind::Grid => Family::Grid { rows: require(args.rows, "--rows")?, cols: require(args.cols, "--cols")? },
        Kind::BinaryTree => Family::BinaryTree { depth: require(args.depth, "--depth")? },
        Kind::RandomRegular => Family::RandomRegular { n: require(args.n, "--n")?, degree: require(args.deg, "--deg")? },
    };
    let seed = match family {
        Family::RandomRegular { .. } => ctx.seed()?,
        _ => ctx.seed.unwrap_or(0),
    };
    let space = family.generate(seed)?;
    let violations = space.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidMetric(violations).into());
    }
    ctx.emit(&to_json(&space.to_table())?)
}

#[derive(Serialize)]
struct ValidateReport {
    n: usize,
    diameter: f64,
    integral: bool,
    valid: bool,
}

fn space_validate(ctx: &mut Context, file: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::Data(format!("reading {}: {e}", file.display())))?;
    let source: SpaceSource =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("parsing {}: {e}", file.display())))?;
    let space = source.into_space()?;
    let report = ValidateReport { n: space.len(), diameter: space.diameter(), integral: space.is_integral(), valid: true };
    ctx.emit(&to_json(&report)?)
}

fn onl_profile(ctx: &mut Context, args: &OnlProfileArgs) -> CliResult<()> {
    for &r in &args.r {
        for &s in &args.s {
            if !(r > 0.0) || s < r {
                return Err(CliError::Usage(format!("need 0 < R <= S, got R = {r}, S = {s}")));
            }
        }
    }
    let mode = match args.mode {
        Mode::Random => SampleMode::Random,
        Mode::Identity => SampleMode::IdentityOnly,
    };
    if mode == SampleMode::Random && args.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let seed = match mode {
        SampleMode::Random => ctx.seed()?,
        SampleMode::IdentityOnly => ctx.seed.unwrap_or(0),
    };
    let space = read_space(&args.space)?;
    let cert = match &args.cert {
        Some(path) => match read_certificate(path, &space)? {
            Certificate::Vector(v) => Some(v),
            Certificate::Subset(s) => Some(certificates::subset_to_vector(&s)),
            Certificate::Kernel(_) => return Err(CliError::Data("a kernel certificate gives no certified bound".into())),
        },
        None => None,
    };
    let mut profiles: Vec<OnlProfile> = Vec::new();
    for &r in &args.r {
        for &s in &args.s {
            let mut config = OnlProfileConfig::new(r, s, args.samples, seed);
            config.search_budget = args.budget;
            config.mode = mode;
            config.field = args.field;
            if args.probe_adjacency {
                let adj = BandedOperator::adjacency(space.clone());
                if adj.is_zero() {
                    return Err(CliError::Data("adjacency probe needs a graph metric with unit distances".into()));
                }
                config.probes.push(adj);
            }
            let cert = cert.as_ref().filter(|c| c.radius() <= s);
            profiles.push(localization::onl_profile(&space, &config, cert)?);
        }
    }
    let bytes = if args.json {
        to_json(&profiles)?
    } else {
        let id = file_id(&args.space);
        let rows: Vec<_> = profiles.iter().map(|p| p.csv_record(&id, space.len())).collect();
        to_csv(&OnlProfile::CSV_HEADER, &rows)?
    };
    ctx.emit(&bytes)
}

fn cert_build(ctx: &mut Context, args: &CertBuild) -> CliResult<()> {
    let space = read_space(&args.space)?;
    let space_ref = args.space.to_string_lossy().into_owned();
    let cert = match args.kind {
        CertKind::Ball => ball_indicator_certificate(&space, require(args.s, "--S")?)?,
        CertKind::TreeRay => tree_ray_certificate(&space, args.root, require(args.length, "--L")?)?,
    };
    let file = match args.form {
        CertForm::Vector => CertificateFile::from_vector(&cert, space_ref),
        CertForm::Kernel => CertificateFile::from_kernel(&vector_to_kernel(&cert), space_ref, cert.provenance()),
        CertForm::Subset => {
            let sets = (0..cert.len()).map(|x| cert.support(x)).collect();
            let subsets =
                certificates::SubsetCertificate::new(space.clone(), cert.radius(), cert.multiplicity(), sets)?;
            let mut file = CertificateFile::from_subsets(&subsets, space_ref);
            file.provenance = cert.provenance().to_string();
            file
        }
    };
    ctx.emit(&to_json(&file)?)
}

#[derive(Serialize)]
struct CertCheckReport {
    form: &'static str,
    n: usize,
    r: f64,
    radius: Option<f64>,
    multiplicity: Option<usize>,
    vector_deviation: Option<f64>,
    kernel_deviation: f64,
    propagation_bound: f64,
    support_radius: f64,
    unit_diagonal: bool,
    hermitian: bool,
    psd: PsdCheck,
    /// For subset families: whether all sets have one size.
    subset_sizes_equal: Option<bool>,
    valid: bool,
}

fn cert_check(ctx: &mut Context, args: &CertCheck) -> CliResult<()> {
    let space = read_space(&args.space)?;
    let cert = read_certificate(&args.cert, &space)?;
    let (form, vector, subset_equal) = match &cert {
        Certificate::Subset(s) => ("subset", Some(certificates::subset_to_vector(s)), Some(s.equal_sizes())),
        Certificate::Vector(v) => ("vector", Some(v.clone()), None),
        Certificate::Kernel(_) => ("kernel", None, None),
    };
    let kernel = match (&cert, &vector) {
        (Certificate::Kernel(k), _) => k.clone(),
        (_, Some(v)) => vector_to_kernel(v),
        _ => unreachable!(),
    };
    let psd = match check_positive_definite(&kernel.to_dense(), ctx.tol) {
        Ok(p) => p,
        Err(e @ Error::NotHermitian { .. }) => return Err(CliError::Verification(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let report = CertCheckReport {
        form,
        n: space.len(),
        r: args.r,
        radius: vector.as_ref().map(|v| v.radius()),
        multiplicity: vector.as_ref().map(|v| v.multiplicity()),
        vector_deviation: vector.as_ref().map(|v| vector_deviation(v, args.r)),
        kernel_deviation: kernel_deviation(&kernel, &space, args.r),
        propagation_bound: kernel.propagation_bound(),
        support_radius: kernel.support_radius(),
        unit_diagonal: kernel.unit_diagonal(),
        hermitian: kernel.is_hermitian(),
        valid: kernel.unit_diagonal() && kernel.is_hermitian() && psd.is_psd,
        psd,
        subset_sizes_equal: subset_equal,
    };
    let valid = report.valid;
    ctx.emit(&to_json(&report)?)?;
    if valid {
        Ok(())
    } else {
        Err(CliError::Verification("certificate kernel failed its checks".into()))
    }
}

fn equiv_run(ctx: &mut Context, args: &EquivRun) -> CliResult<()> {
    let seed = ctx.seed()?;
    let space = read_space(&args.space)?;
    let source = match args.cert.as_str() {
        "ball" => CertificateSource::BallIndicator,
        "tree_ray" => CertificateSource::TreeRay { root: args.root, length: require(args.length, "--L")? },
        path => match read_certificate(Path::new(path), &space)? {
            Certificate::Vector(v) => CertificateSource::Supplied(v),
            Certificate::Subset(s) => CertificateSource::Supplied(certificates::subset_to_vector(&s)),
            Certificate::Kernel(_) => return Err(CliError::Data("equivalence runs need a vector certificate".into())),
        },
    };
    let mut config = EquivalenceConfig::new(args.r, args.s, source, args.samples, seed);
    config.search_budget = args.budget;
    config.psd_tolerance = ctx.tol;
    let report = duality::equivalence_experiment(&space, &config)?;
    ctx.emit(&to_json(&report)?)?;
    if let Some(path) = &args.csv {
        let rows = vec![report.csv_record(&file_id(&args.space))];
        write_atomic(path, &to_csv(&EquivalenceReport::CSV_HEADER, &rows)?)?;
    }
    if report.verified {
        Ok(())
    } else {
        Err(CliError::Verification("a certified inequality or kernel check failed".into()))
    }
}

fn cb_check(ctx: &mut Context, args: &CbCheck) -> CliResult<()> {
    let seed = ctx.seed()?;
    let space = read_space(&args.space)?;
    let report = duality::sampled_cb_norm_check(&space, args.r, args.s, args.amplification, args.samples, seed)?;
    ctx.emit(&to_json(&report)?)?;
    if report.holds {
        Ok(())
    } else {
        Err(CliError::Verification("amplified estimate exceeds the scalar estimate".into()))
    }
}

fn dispatch(ctx: &mut Context, command: &Command) -> CliResult<()> {
    match command {
        Command::Space { action: SpaceCommand::Gen(a) } => space_gen(ctx, a),
        Command::Space { action: SpaceCommand::Validate { file } } => space_validate(ctx, file),
        Command::Onl { action: OnlCommand::Profile(a) } => onl_profile(ctx, a),
        Command::Cert { action: CertCommand::Build(a) } => cert_build(ctx, a),
        Command::Cert { action: CertCommand::Check(a) } => cert_check(ctx, a),
        Command::Equiv { action: EquivCommand::Run(a) } => equiv_run(ctx, a),
        Command::Cb { action: CbCommand::Check(a) } => cb_check(ctx, a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = stdout.write_all(text.as_bytes());
            } else {
                let _ = stderr.write_all(text.as_bytes());
            }
            return if code == 0 { 0 } else { EXIT_USAGE };
        }
    };
    let mut ctx = Context { seed: cli.seed, tol: cli.tol, out: cli.out.clone(), stdout: Vec::new() };
    let result = match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&mut ctx, &cli.command)),
            Err(e) => Err(CliError::Usage(format!("thread pool: {e}"))),
        },
        None => dispatch(&mut ctx, &cli.command),
    };
    if let Err(e) = stdout.write_all(&ctx.stdout) {
        let _ = writeln!(stderr, "onl-lab: writing stdout: {e}");
        return EXIT_DATA;
    }
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "onl-lab: {e}");
            e.exit_code()
        }
    }
}

/// Reads a distance table written by `space gen`.
pub fn read_table(path: &Path) -> CliResult<DistanceTable> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(e.to_string()))
}
