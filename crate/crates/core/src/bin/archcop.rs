use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use archcop::archtest::{run_test, Bandwidth, Hypothesis, TestConfig, Ties};
use archcop::empirical::{EmpiricalCopula, Sample};
use archcop::error::{Error, Result};
use archcop::model_spec::parse_model;
use archcop::process::{hn_field, Grid3, Statistic};
use archcop::rng::Stream;
use archcop::study::{run_study, StudyConfig};

const EXIT_ERROR: u8 = 1;
const EXIT_REJECT: u8 = 3;

#[derive(Parser)]
#[command(name = "archcop", version, about = "Tests for associativity and Archimedeanity of bivariate copulas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single test on CSV data. Exit code 0: not rejected, 3: rejected, 1: error.
    Test(TestArgs),
    /// Draw a pseudo-observation sample from a copula model.
    Sample(SampleArgs),
    /// Run a rejection-rate study described by a TOML file.
    Study(StudyArgs),
    /// Export the empirical diagonal and its fixed points.
    Diag(DiagArgs),
}

#[derive(Args)]
struct CsvArgs {
    /// First line holds column names.
    #[arg(long)]
    has_header: bool,
    /// Field delimiter (single byte).
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// First variable: 1-based column number, or a header name.
    #[arg(long, default_value = "1")]
    x_col: String,
    /// Second variable: 1-based column number, or a header name.
    #[arg(long, default_value = "2")]
    y_col: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum HypArg {
    Arch,
    Assoc,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatArg {
    L2,
    Ks,
}

#[derive(Clone, Copy, ValueEnum)]
enum TiesArg {
    Error,
    Random,
}

#[derive(Args)]
struct TestArgs {
    /// CSV file, or '-' for standard input.
    input: PathBuf,
    #[command(flatten)]
    csv: CsvArgs,
    #[arg(long, value_enum, default_value = "arch")]
    hypothesis: HypArg,
    #[arg(long = "stat", value_enum, default_value = "l2")]
    statistic: StatArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Bootstrap replications.
    #[arg(short = 'B', long = "bootstrap", default_value_t = 200)]
    bootstrap: usize,
    /// Grid points per axis of the cube lattice.
    #[arg(long, default_value_t = 20)]
    grid_m: usize,
    /// Derivative bandwidth: a number in (0, 0.5) or 'auto' for n^(-1/4).
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    ties: TiesArg,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the observed process field as x,y,z,value CSV.
    #[arg(long)]
    field_out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Model specification, e.g. "clayton(tau=1/3)".
    spec: String,
    #[arg(short = 'n', long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit a "u1,u2" header line.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Study configuration (TOML).
    config: PathBuf,
    /// Output prefix: writes PREFIX.json, PREFIX.csv and PREFIX.long.csv.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; overrides the config's parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct DiagArgs {
    /// CSV file or '-'; omit to sample from --model.
    input: Option<PathBuf>,
    #[command(flatten)]
    csv: CsvArgs,
    /// Model whose diagonal is added as a column (and sampled from when no input is given).
    #[arg(long)]
    model: Option<String>,
    #[arg(short = 'n', long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "random")]
    ties: TiesArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Sample(a) => cmd_sample(a).map(|_| 0),
        Command::Study(a) => cmd_study(a).map(|_| 0),
        Command::Diag(a) => cmd_diag(a).map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path.as_os_str() == "-" {
        io::stdin().read_to_end(&mut buf).map_err(|e| io_err(path, e))?;
    } else {
        File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| io_err(path, e))?;
    }
    Ok(buf)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_all(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = open_output(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::Data(format!("cannot write output: {e}")))
}

fn resolve_column(spec: &str, header: Option<&csv::StringRecord>) -> Result<usize> {
    if let Ok(k) = spec.parse::<usize>() {
        if k == 0 {
            return Err(Error::Config("column numbers start at 1".into()));
        }
        return Ok(k - 1);
    }
    header
        .and_then(|h| h.iter().position(|name| name == spec))
        .ok_or_else(|| Error::Config(format!("no column named '{spec}'")))
}

fn read_sample(path: &Path, args: &CsvArgs) -> Result<Sample> {
    if !args.delimiter.is_ascii() {
        return Err(Error::Config("delimiter must be a single ASCII character".into()));
    }
    let bytes = read_input(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(args.has_header)
        .delimiter(args.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let header = if args.has_header {
        Some(reader.headers().map_err(|e| Error::Data(format!("cannot read header: {e}")))?.clone())
    } else {
        None
    };
    let cols = [resolve_column(&args.x_col, header.as_ref())?, resolve_column(&args.y_col, header.as_ref())?];
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Data(format!("line {line}: {e}"))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut row = [0.0; 2];
        for (slot, &c) in row.iter_mut().zip(&cols) {
            let cell = record
                .get(c)
                .ok_or_else(|| Error::Data(format!("line {line}: missing column {}", c + 1)))?;
            *slot = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("line {line}, column {}: '{cell}' is not a finite number", c + 1)))?;
        }
        rows.push(row);
    }
    Sample::new(rows)
}

fn ties(t: TiesArg) -> Ties {
    match t {
        TiesArg::Error => Ties::Error,
        TiesArg::Random => Ties::Random,
    }
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Bandwidth::Auto);
    }
    s.parse::<f64>()
        .map(Bandwidth::Fixed)
        .map_err(|_| Error::Config(format!("bandwidth must be a number or 'auto', got '{s}'")))
}

fn set_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(j) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Error::Internal(format!("cannot configure worker pool: {e}")))?;
    }
    Ok(())
}

fn cmd_test(a: TestArgs) -> Result<u8> {
    set_jobs(a.jobs)?;
    let sample = read_sample(&a.input, &a.csv)?;
    let config = TestConfig {
        hypothesis: match a.hypothesis {
            HypArg::Arch => Hypothesis::Archimedeanity,
            HypArg::Assoc => Hypothesis::Associativity,
        },
        statistic: match a.statistic {
            StatArg::L2 => Statistic::L2,
            StatArg::Ks => Statistic::Ks,
        },
        alpha: a.alpha,
        bootstrap: a.bootstrap,
        grid_m: a.grid_m,
        bandwidth: parse_bandwidth(&a.bandwidth)?,
        seed: a.seed,
        ties: ties(a.ties),
    };
    let report = run_test(&sample, &config)?;
    for w in &report.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &a.field_out {
        let ec = EmpiricalCopula::from_sample(&sample, config.tie_policy())?;
        let field = hn_field(&ec, &Grid3::new(config.grid_m)?);
        let mut out = open_output(Some(path))?;
        field
            .write_csv(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| io_err(path, e))?;
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
    write_all(a.out.as_deref(), &(json + "\n"))?;
    Ok(if report.reject { EXIT_REJECT } else { 0 })
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let model = parse_model(&a.spec)?;
    let data = model.sample(a.n, &mut Stream::from_seed(a.seed).child_label("sample").rng())?;
    let mut text = String::new();
    if a.header {
        text.push_str("u1,u2\n");
    }
    for [u1, u2] in data.rows() {
        text.push_str(&format!("{u1},{u2}\n"));
    }
    write_all(a.out.as_deref(), &text)
}

fn cmd_study(a: StudyArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| io_err(&a.config, e))?;
    let cfg = StudyConfig::from_toml(&text)?;
    let outcome = run_study(&cfg, a.jobs)?;
    let prefix = a.out.display().to_string();
    let result = &outcome.result;
    write_all(Some(Path::new(&format!("{prefix}.json"))), &(result.to_json() + "\n"))?;
    write_all(Some(Path::new(&format!("{prefix}.csv"))), &result.table_csv())?;
    write_all(Some(Path::new(&format!("{prefix}.long.csv"))), &result.long_csv())?;
    for s in &result.scenarios {
        if s.failures > 0 {
            eprintln!("warning: scenario '{}' had {} failed runs", s.label, s.failures);
        }
    }
    print!("{}", result.table_csv());
    eprintln!("wall time {:.2}s on {} workers", outcome.wall_time.as_secs_f64(), outcome.workers);
    Ok(())
}

fn cmd_diag(a: DiagArgs) -> Result<()> {
    let model = a.model.as_deref().map(parse_model).transpose()?;
    let sample = match (&a.input, &model) {
        (Some(path), _) => read_sample(path, &a.csv)?,
        (None, Some(m)) => {
            let n = a.n.ok_or_else(|| Error::Config("-n is required when sampling from --model".into()))?;
            m.sample(n, &mut Stream::from_seed(a.seed).child_label("sample").rng())?
        }
        (None, None) => return Err(Error::Config("give an input CSV or --model".into())),
    };
    let policy = match ties(a.ties) {
        Ties::Error => archcop::TiePolicy::Error,
        Ties::Random => archcop::TiePolicy::RandomBreak { seed: a.seed },
    };
    let ec = EmpiricalCopula::from_sample(&sample, policy)?;
    let n = ec.n();
    let mut text = String::from(if model.is_some() { "u,cn_diag,model_diag,fixed_point\n" } else { "u,cn_diag,fixed_point\n" });
    for i in 0..=n {
        let u = i as f64 / n as f64;
        let cn = ec.count(i, i) as f64 / n as f64;
        let fixed = ec.is_diagonal_fixed_point(i);
        match &model {
            Some(m) => text.push_str(&format!("{u},{cn},{},{fixed}\n", m.diagonal(u)?)),
            None => text.push_str(&format!("{u},{cn},{fixed}\n")),
        }
    }
    write_all(a.out.as_deref(), &text)
}
