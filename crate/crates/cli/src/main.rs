use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use fedgae_cli::config::{parse_config, KEYS};
use fedgae_cli::scenario::{run_scenario, run_sweep, SweepAxis};
use fedgae_core::analysis::{asymptotic_gap, convergence_bound, BoundParams};

fn key_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .help("key=value configuration file; flags below override it"),
    );
    KEYS.iter().fold(cmd, |cmd, k| {
        let default = if k.default.is_empty() { "\"\"" } else { k.default };
        cmd.arg(
            Arg::new(k.name)
                .long(k.name)
                .value_name("VALUE")
                .help(format!("{} [default: {default}]", k.help)),
        )
    })
}

fn cli() -> Command {
    let values = |default: &'static str| {
        Arg::new("values")
            .long("values")
            .value_name("LIST")
            .default_value(default)
            .help("comma-separated sweep points")
    };
    let num = |name: &'static str, default: &'static str, help: &'static str| {
        Arg::new(name)
            .long(name)
            .value_name("X")
            .default_value(default)
            .help(help)
    };
    Command::new("fedgae")
        .about("Federated learning simulator with graph-autoencoder model poisoning")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(key_args(Command::new("run").about("Run one scenario")))
        .subcommand(
            key_args(Command::new("sweep-j").about("Run one scenario per benign client count"))
                .arg(values("5,10,15,20,25")),
        )
        .subcommand(
            key_args(Command::new("sweep-eavesdrop").about("Run one scenario per eavesdropped client count"))
                .arg(values("3,5")),
        )
        .subcommand(
            Command::new("bound")
                .about("Evaluate the attacked-FedAvg convergence bound and asymptotic gap")
                .arg(num("theta", "1.0", "initial optimality gap"))
                .arg(num("rho", "0.1", "PL constant"))
                .arg(num("eta", "0.1", "learning rate"))
                .arg(num("l_c", "1.0", "Lipschitz constant of the local losses"))
                .arg(num("d", "400", "total benign data size"))
                .arg(num("d_a", "100", "attacker claimed data size"))
                .arg(num("f_max", "2.0", "maximum loss value"))
                .arg(num("d_t", "0.5", "stealth radius"))
                .arg(num("rounds", "50", "print the bound for t = 0..=rounds"))
                .arg(
                    Arg::new("quiet")
                        .long("quiet")
                        .action(ArgAction::SetTrue)
                        .help("omit the per-round table"),
                ),
        )
}

fn overrides(m: &ArgMatches) -> Vec<(String, String)> {
    KEYS.iter()
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect()
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad sweep value '{v}': {e}"))
        })
        .collect()
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn run(m: &ArgMatches, sweep: Option<SweepAxis>) -> Result<(), String> {
    let file = m.get_one::<String>("config").map(PathBuf::from);
    let cfg = parse_config(file.as_deref(), &overrides(m)).map_err(|e| e.to_string())?;
    match sweep {
        None => {
            let res = run_scenario(&cfg).map_err(|e| e.to_string())?;
            emit(&format!(
                "{}output_dir={}\n",
                res.summary.to_text(),
                cfg.output_dir.display()
            ));
        }
        Some(axis) => {
            let values = parse_list(m.get_one::<String>("values").expect("has default"))?;
            for (v, res) in run_sweep(&cfg, axis, &values).map_err(|e| e.to_string())? {
                emit(&format!("{v},{:.16e}\n", res.summary.final_global_accuracy));
            }
        }
    }
    Ok(())
}

fn bound(m: &ArgMatches) -> Result<(), String> {
    let get = |name: &str| -> Result<f64, String> {
        let v = m.get_one::<String>(name).expect("has default");
        v.parse().map_err(|e| format!("bad value '{v}' for --{name}: {e}"))
    };
    let params = BoundParams {
        theta: get("theta")?,
        rho: get("rho")?,
        eta: get("eta")?,
        l_c: get("l_c")?,
        d_total: get("d")?,
        d_a: get("d_a")?,
        f_max: get("f_max")?,
        d_t: get("d_t")?,
    };
    let rounds: u32 = m
        .get_one::<String>("rounds")
        .expect("has default")
        .parse()
        .map_err(|e| format!("bad --rounds: {e}"))?;
    if params.is_vacuous() {
        eprintln!(
            "warning: zeta = {} lies outside (0, 1); the bound is vacuous",
            params.zeta()
        );
    }
    let gap = asymptotic_gap(&params).map_err(|e| e.to_string())?;
    if !m.get_flag("quiet") {
        let mut table = String::from("t,bound\n");
        for t in 0..=rounds {
            let b = convergence_bound(&params, t).map_err(|e| e.to_string())?;
            table.push_str(&format!("{t},{b:.16e}\n"));
        }
        emit(&table);
    }
    eprintln!("zeta={:.16e}", params.zeta());
    eprintln!("asymptotic_gap={gap:.16e}");
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let result = match matches.subcommand() {
        Some(("run", m)) => run(m, None),
        Some(("sweep-j", m)) => run(m, Some(SweepAxis::Clients)),
        Some(("sweep-eavesdrop", m)) => run(m, Some(SweepAxis::Eavesdrop)),
        Some(("bound", m)) => bound(m),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
