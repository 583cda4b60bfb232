//! `graspgen` — search, evaluate and render tendon-driven gripper designs.
//!
//! Exit codes: 0 success, 2 configuration/input error, 3 runtime error,
//! 4 design file is not a terminal (fully parameterized) design.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use graspgen_core::config::Config;
use graspgen_core::grammar::{self, DesignGraph};
use graspgen_core::mechanism::{compile, validate, MechanismError, MechanismSpec};
use graspgen_core::render::{render_trace_frames, Viewport};
use graspgen_core::reward::evaluate_design;
use graspgen_core::search::{run_search, DesignEvaluator, IterationRecord};
use graspgen_core::sim::{run_grasp, trace_to_csv, Contact, SimObject};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_NOT_TERMINAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "graspgen",
    version,
    about = "Generative design of underactuated tendon-driven grippers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte-Carlo tree search and persist trace, designs and reports.
    Search {
        /// Configuration file (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the search seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the iteration budget.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate one design over the configured object set and print the
    /// report to standard output.
    Evaluate {
        /// Design graph document (JSON).
        #[arg(long)]
        design: PathBuf,
        /// Configuration file (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate one grasp and write SVG frames plus force traces.
    Render {
        /// Design graph document (JSON).
        #[arg(long)]
        design: PathBuf,
        /// Object name from the config's object set.
        #[arg(long)]
        object: String,
        /// Tendon tensions in newtons, comma-separated; a single value is
        /// applied to every finger.
        #[arg(long)]
        tension: String,
        /// Output directory for frames and CSVs.
        #[arg(long)]
        out: PathBuf,
        /// Configuration file; the built-in defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seconds between rendered frames.
        #[arg(long, default_value_t = 0.1)]
        frame_interval: f64,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    fn not_terminal(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NOT_TERMINAL,
            message: message.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search {
            config,
            out,
            seed,
            iterations,
        } => cmd_search(&config, out, seed, iterations),
        Command::Evaluate { design, config } => cmd_evaluate(&design, &config),
        Command::Render {
            design,
            object,
            tension,
            out,
            config,
            frame_interval,
        } => cmd_render(&design, &object, &tension, &out, config.as_deref(), frame_interval),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn load_config(path: &Path) -> Result<Config, CliError> {
    Config::load(path).map_err(|e| CliError::config(e.to_string()))
}

fn load_design(path: &Path) -> Result<DesignGraph, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read design {}: {e}", path.display())))?;
    grammar::deserialize(&text)
        .map_err(|e| CliError::config(format!("design {}: {e}", path.display())))
}

fn compile_design(
    design: &DesignGraph,
    config: &Config,
) -> Result<MechanismSpec, CliError> {
    compile(design, &config.mechanism).map_err(|e| match e {
        MechanismError::NotTerminal { .. } => CliError::not_terminal(e.to_string()),
        MechanismError::Structure(_) => CliError::not_terminal(e.to_string()),
    })
}

fn csv_field(v: f64) -> String {
    format!("{v}")
}

fn cmd_search(
    config_path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    iterations: Option<usize>,
) -> Result<(), CliError> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = seed {
        config.search.seed = seed;
    }
    if let Some(iterations) = iterations {
        config.search.iterations = iterations;
    }
    config
        .validate()
        .map_err(|e| CliError::config(e.to_string()))?;

    let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
    let designs_dir = out_dir.join("designs");
    fs::create_dir_all(&designs_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", designs_dir.display())))?;

    let grammar = config
        .grammar_engine()
        .map_err(|e| CliError::config(e.to_string()))?;
    let evaluator = DesignEvaluator {
        physical: config.mechanism.clone(),
        setup: config
            .evaluation_setup()
            .map_err(|e| CliError::config(e.to_string()))?,
        seed: config.search.seed,
        observer: None,
    };

    // Stream the trace so partial results survive interruption.
    let trace_path = out_dir.join("trace.csv");
    let mut trace_file = fs::File::create(&trace_path)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", trace_path.display())))?;
    writeln!(
        trace_file,
        "iteration,episode_reward,best_reward,v_root,mean_q,test_run_reward"
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;

    let mut write_row = |r: &IterationRecord| {
        let test = r.test_run_reward.map(csv_field).unwrap_or_default();
        let _ = writeln!(
            trace_file,
            "{},{},{},{},{},{}",
            r.iteration,
            csv_field(r.episode_reward),
            csv_field(r.best_reward),
            csv_field(r.v_root),
            csv_field(r.mean_q),
            test
        );
        let _ = trace_file.flush();
    };

    let result = run_search(grammar, &config.search, &evaluator, &mut write_row)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    for (rank, design) in result.top.iter().enumerate() {
        let rank = rank + 1;
        let graph_path = designs_dir.join(format!("design_{rank}.json"));
        fs::write(&graph_path, grammar::serialize(&design.graph) + "\n")
            .map_err(|e| CliError::runtime(e.to_string()))?;
        if let Some(report) = &design.report {
            let report_path = designs_dir.join(format!("design_{rank}.report.json"));
            let text = serde_json::to_string_pretty(report)
                .map_err(|e| CliError::runtime(e.to_string()))?;
            fs::write(&report_path, text + "\n").map_err(|e| CliError::runtime(e.to_string()))?;
        }
    }

    let meta = serde_json::json!({
        "tool": "graspgen",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.search.seed,
        "iterations": config.search.iterations,
        "config": config,
    });
    let meta_path = out_dir.join("run_meta.json");
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&meta).map_err(|e| CliError::runtime(e.to_string()))? + "\n",
    )
    .map_err(|e| CliError::runtime(e.to_string()))?;

    let failures = result.tree.failures();
    if !failures.is_empty() {
        eprintln!("warning: {} design evaluations failed", failures.len());
    }
    println!(
        "search finished: {} iterations, best reward {}, {} designs written to {}",
        config.search.iterations,
        result
            .trace
            .last()
            .map(|r| csv_field(r.best_reward))
            .unwrap_or_default(),
        result.top.len(),
        designs_dir.display()
    );
    Ok(())
}

fn cmd_evaluate(design_path: &Path, config_path: &Path) -> Result<(), CliError> {
    let config = load_config(config_path)?;
    let design = load_design(design_path)?;
    let spec = compile_design(&design, &config)?;
    for warning in validate(&spec, config.workspace_center()) {
        eprintln!("warning: {warning}");
    }
    let setup = config
        .evaluation_setup()
        .map_err(|e| CliError::config(e.to_string()))?;
    let report = evaluate_design(&spec, &setup, config.search.seed)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn parse_tensions(csv: &str, fingers: usize) -> Result<Vec<f64>, CliError> {
    let values: Result<Vec<f64>, _> = csv.split(',').map(|s| s.trim().parse::<f64>()).collect();
    let values =
        values.map_err(|e| CliError::config(format!("cannot parse --tension {csv:?}: {e}")))?;
    match values.len() {
        1 => Ok(vec![values[0]; fingers]),
        n if n == fingers => Ok(values),
        n => Err(CliError::config(format!(
            "--tension has {n} values but the design has {fingers} fingers"
        ))),
    }
}

fn find_object<'a>(config: &'a Config, name: &str) -> Result<&'a SimObject, CliError> {
    config
        .reward
        .objects
        .iter()
        .find(|o| o.name == name)
        .map(|o| &o.object)
        .ok_or_else(|| {
            let known: Vec<&str> = config.reward.objects.iter().map(|o| o.name.as_str()).collect();
            CliError::config(format!(
                "object {name:?} is not in the config's object set {known:?}"
            ))
        })
}

fn cmd_render(
    design_path: &Path,
    object_name: &str,
    tension_csv: &str,
    out_dir: &Path,
    config_path: Option<&Path>,
    frame_interval: f64,
) -> Result<(), CliError> {
    let config = match config_path {
        Some(path) => load_config(path)?,
        None => Config::default(),
    };
    let design = load_design(design_path)?;
    let spec = compile_design(&design, &config)?;
    let object = find_object(&config, object_name)?.clone();
    let tensions = parse_tensions(tension_csv, spec.fingers.len())?;
    if !(frame_interval > 0.0) {
        return Err(CliError::config("--frame-interval must be positive"));
    }

    let trace = run_grasp(&spec, &object, &tensions, &config.sim, config.search.seed)
        .map_err(|e| CliError::runtime(e.to_string()))?;

    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    let frames = render_trace_frames(&spec, &object, &trace, frame_interval, &Viewport::default());
    for (i, (_, svg)) in frames.iter().enumerate() {
        let path = out_dir.join(format!("frame_{i:04}.svg"));
        fs::write(&path, svg).map_err(|e| CliError::runtime(e.to_string()))?;
    }

    // Total normal force over time.
    let mut forces = String::from("t,sum_normal_force\n");
    for (t, contacts) in &trace.contact_snapshots {
        let sum = contacts
            .iter()
            .map(Contact::normal_force)
            .sum::<f64>()
            .max(0.0);
        forces.push_str(&format!("{t:.6},{sum:.6}\n"));
    }
    fs::write(out_dir.join("forces.csv"), forces).map_err(|e| CliError::runtime(e.to_string()))?;
    fs::write(out_dir.join("trace.csv"), trace_to_csv(&trace))
        .map_err(|e| CliError::runtime(e.to_string()))?;

    println!(
        "rendered {} frames to {} (grasp secured: {})",
        frames.len(),
        out_dir.display(),
        trace.secured()
    );
    Ok(())
}
