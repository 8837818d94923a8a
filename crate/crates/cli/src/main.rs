use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use otrepair::datagen::{run_monte_carlo, run_sweep, SweepSpec, SweepVariable};
use otrepair::ingest::{load_tabular, RowOutcome, RowParser, TabularSchema};
use otrepair::io::{
    load_model, save_json, save_model, write_atomic, write_curve_csv, write_dataset_csv, write_summary_csv,
    SimulationConfig,
};
use otrepair::metrics::conditional_fairness;
use otrepair::model::LabeledRecord;
use otrepair::repair::{design_repair_model, geometric_repair, repair_records, RepairReport, RepairRng, Resolution};
use otrepair::{Error, Result};

const DEFAULT_BATCH: usize = 8192;

#[derive(Parser)]
#[command(name = "otrepair", version, about = "Optimal-transport repair of tabular features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design repair plans from a labelled research CSV.
    Design {
        #[arg(long)]
        research: PathBuf,
        /// Schema TOML, or `adult` for the built-in Adult layout.
        #[arg(long)]
        schema: String,
        /// Grid size for every slice, or a TOML file with `nq = [[..], [..]]`.
        #[arg(long, default_value = "50")]
        nq: String,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        /// Recorded in the model as provenance.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repair an archive CSV, appending `<feature>_repaired` columns.
    Repair {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Overrides the schema stored in the model.
        #[arg(long)]
        schema: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BATCH)]
        batch_size: usize,
    },
    /// Measure conditional fairness of a CSV.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        schema: String,
        #[arg(long, default_value_t = otrepair::metrics::DEFAULT_EVAL_GRID)]
        grid: usize,
        #[arg(long, default_value_t = otrepair::metrics::DEFAULT_DENSITY_FLOOR)]
        floor: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo comparison of repair variants on a simulated population.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 20)]
        replications: usize,
        /// Overrides the config's grid size.
        #[arg(long)]
        nq: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Per-replication values as JSON.
        #[arg(long)]
        details: Option<PathBuf>,
    },
    /// Sweep research size or grid size and record the E curve.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        variable: SweepVariable,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        replications: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// On-sample geometric repair of a research CSV.
    BaselineGeometric {
        #[arg(long)]
        research: PathBuf,
        #[arg(long)]
        schema: String,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn schema_arg(arg: &str) -> Result<TabularSchema> {
    if arg == "adult" {
        Ok(TabularSchema::adult())
    } else {
        TabularSchema::from_file(Path::new(arg))
    }
}

fn resolution_arg(arg: &str) -> Result<Resolution> {
    if let Ok(n) = arg.parse::<usize>() {
        return Ok(Resolution::Uniform(n));
    }
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct NqFile {
        nq: Resolution,
    }
    let text = std::fs::read_to_string(arg).map_err(|e| Error::Io {
        path: arg.into(),
        source: e,
    })?;
    let file: NqFile = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    Ok(file.nq)
}

fn design(research: &Path, schema: &str, nq: &str, t: f64, seed: Option<u64>, out: &Path) -> Result<()> {
    let schema = schema_arg(schema)?;
    let table = load_tabular(&[research], &schema)?;
    log::info!(
        "{} research records ({} rows, {} dropped as missing)",
        table.dataset.len(),
        table.rows_read,
        table.dropped_missing
    );
    let mut model = design_repair_model(&table.dataset, &resolution_arg(nq)?, t)?;
    model.set_feature_names(table.feature_names)?;
    let meta = model.metadata_mut();
    meta.seed = seed;
    meta.created_unix = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
    meta.schema = Some(schema);
    save_model(&model, out)
}

#[derive(Serialize)]
struct StreamReport {
    rows_read: usize,
    rows_repaired: usize,
    rows_missing: usize,
    rows_bad: usize,
    #[serde(flatten)]
    repair: RepairReport,
}

fn repair(
    model_path: &Path,
    input: &Path,
    seed: u64,
    out: &Path,
    report_path: Option<&Path>,
    schema: Option<&str>,
    batch_size: usize,
) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let model = load_model(model_path)?;
    let names = model.metadata().feature_names.clone();
    let schema = match schema {
        Some(arg) => schema_arg(arg)?,
        None => model
            .metadata()
            .schema
            .clone()
            .unwrap_or_else(|| TabularSchema::binary_labels(names.clone())),
    };
    if schema.features != names {
        return Err(Error::SchemaMismatch(format!(
            "schema features {:?} differ from model features {:?}",
            schema.features, names
        )));
    }
    let mut reader = schema
        .csv_reader_builder()
        .from_path(input)
        .map_err(|e| Error::Io {
            path: input.into(),
            source: std::io::Error::other(e.to_string()),
        })?;
    let header = RowParser::header_for(&schema, &mut reader)?;
    let parser = RowParser::new(&schema, &header)?;
    let rng = RepairRng::new(seed);
    let mut stats = StreamReport {
        rows_read: 0,
        rows_repaired: 0,
        rows_missing: 0,
        rows_bad: 0,
        repair: RepairReport::new(model.d()),
    };

    write_atomic(out, |file| {
        let mut writer = csv::Writer::from_writer(file);
        let mut out_header = header.clone();
        out_header.extend(names.iter().map(|n| format!("{n}_repaired")));
        writer.write_record(&out_header)?;
        let mut rows = csv::StringRecord::new();
        let mut batch: Vec<csv::StringRecord> = Vec::with_capacity(batch_size);
        loop {
            batch.clear();
            while batch.len() < batch_size && reader.read_record(&mut rows)? {
                batch.push(rows.clone());
            }
            if batch.is_empty() {
                break;
            }
            let parsed: Vec<RowOutcome> = batch.iter().map(|r| parser.parse(r)).collect();
            let records: Vec<LabeledRecord> = parsed
                .iter()
                .filter_map(|p| match p {
                    RowOutcome::Record(r) => Some(r.clone()),
                    _ => None,
                })
                .collect();
            let (repaired, report) = repair_records(&records, stats.rows_repaired as u64, &model, &rng)?;
            stats.repair.merge(&report);
            let mut repaired = repaired.into_iter();
            for (row, outcome) in batch.iter().zip(&parsed) {
                stats.rows_read += 1;
                let mut fields: Vec<String> = row.iter().map(str::to_string).collect();
                match outcome {
                    RowOutcome::Record(_) => {
                        let r = repaired.next().expect("one repaired record per parsed row");
                        fields.extend(r.features.iter().map(f64::to_string));
                        stats.rows_repaired += 1;
                    }
                    RowOutcome::Missing => {
                        fields.extend(names.iter().map(|_| String::new()));
                        stats.rows_missing += 1;
                    }
                    RowOutcome::Bad(message) => {
                        log::warn!("{}: row {}: {message}", input.display(), stats.rows_read);
                        fields.extend(names.iter().map(|_| String::new()));
                        stats.rows_bad += 1;
                    }
                }
                writer.write_record(&fields)?;
            }
        }
        if stats.rows_bad as f64 > schema.max_bad_fraction * stats.rows_read as f64 {
            return Err(Error::TooManyBadRows {
                bad: stats.rows_bad,
                total: stats.rows_read,
                tolerance: schema.max_bad_fraction,
            });
        }
        writer.flush().map_err(|e| Error::Io {
            path: out.into(),
            source: e,
        })
    })?;
    log::info!(
        "repaired {} of {} rows, {} values clamped",
        stats.rows_repaired,
        stats.rows_read,
        stats.repair.total_clamped()
    );
    match report_path {
        Some(path) => save_json(&stats, path),
        None => Ok(()),
    }
}

fn evaluate(input: &Path, schema: &str, grid: usize, floor: f64, out: &Path) -> Result<()> {
    let schema = schema_arg(schema)?;
    let table = load_tabular(&[input], &schema)?;
    let mut report = conditional_fairness(&table.dataset, grid, floor)?;
    report.feature_names = table.feature_names;
    save_json(&report, out)
}

fn simulate(spec: &Path, replications: usize, nq: Option<usize>, out: &Path, details: Option<&Path>) -> Result<()> {
    let mut config = SimulationConfig::from_file(spec)?;
    if let Some(n) = nq {
        config.settings.n_q = n;
    }
    let result = run_monte_carlo(&config.population, replications, &config.settings)?;
    write_atomic(out, |f| write_summary_csv(&result.summary, f))?;
    match details {
        Some(path) => save_json(&result.replications, path),
        None => Ok(()),
    }
}

fn sweep(spec: &Path, variable: SweepVariable, grid: Vec<usize>, replications: usize, out: &Path) -> Result<()> {
    let config = SimulationConfig::from_file(spec)?;
    let curve = run_sweep(&SweepSpec {
        variable,
        grid,
        replications,
        base: config.population,
        settings: config.settings,
    })?;
    write_atomic(out, |f| write_curve_csv(&curve, f))
}

fn baseline_geometric(research: &Path, schema: &str, t: f64, out: &Path) -> Result<()> {
    let schema = schema_arg(schema)?;
    let table = load_tabular(&[research], &schema)?;
    let repaired = geometric_repair(&table.dataset, t)?;
    write_atomic(out, |f| write_dataset_csv(&repaired, &table.feature_names, f))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Design {
            research,
            schema,
            nq,
            t,
            seed,
            out,
        } => design(&research, &schema, &nq, t, seed, &out),
        Command::Repair {
            model,
            input,
            seed,
            out,
            report,
            schema,
            batch_size,
        } => repair(&model, &input, seed, &out, report.as_deref(), schema.as_deref(), batch_size),
        Command::Evaluate {
            input,
            schema,
            grid,
            floor,
            out,
        } => evaluate(&input, &schema, grid, floor, &out),
        Command::Simulate {
            spec,
            replications,
            nq,
            out,
            details,
        } => simulate(&spec, replications, nq, &out, details.as_deref()),
        Command::Sweep {
            spec,
            variable,
            grid,
            replications,
            out,
        } => sweep(&spec, variable, grid, replications, &out),
        Command::BaselineGeometric { research, schema, t, out } => baseline_geometric(&research, &schema, t, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error[{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}
