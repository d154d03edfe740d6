use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use radcom_cli::artifacts::{render, write_all};
use radcom_cli::iq::read_iq;
use radcom_cli::pipeline::{process, run, RxResult};
use radcom_cli::scenario::{load_frame_config, load_scenario, Scenario};
use radcom_cli::{params, CliError, CliResult};

const DEFAULT_OUT: &str = "radcom_out";

#[derive(Parser)]
#[command(name = "radcom", version, about = "Bistatic OFDM radar-communication link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario end to end and write all artifacts.
    Run {
        scenario: PathBuf,
        /// Output directory [default: scenario `output.dir`, then $RADCOM_OUT_DIR, then ./radcom_out]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Process an IQ capture with the receiver configuration of a scenario file.
    Capture {
        iq: PathBuf,
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the closed-form radar and communication parameters.
    Params { config: PathBuf },
}

fn out_dir(cli: Option<PathBuf>, sc: &Scenario) -> PathBuf {
    cli.or_else(|| sc.output.dir.clone())
        .or_else(|| std::env::var_os("RADCOM_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn summary(res: &RxResult, dir: &Path) {
    let m = &res.rx.metrics;
    let ber = |b: Option<f64>| b.map_or("n/a".to_string(), |v| format!("{v:.3e}"));
    println!(
        "sync: start {} cfo {:.1} Hz sfo {:.3e}",
        res.sync.fine_start, res.sync.cfo_hat, res.sync.sfo_hat
    );
    println!(
        "comm: EVM {:.2}% pre-FEC BER {} post-FEC BER {} ({} of {} codewords failed)",
        m.evm_rms_percent,
        ber(m.pre_fec_ber),
        ber(m.post_fec_ber),
        m.codewords_failed,
        m.codewords
    );
    for s in &res.sensing {
        println!("radar {}: {} detections", s.mode.as_str(), s.detections.len());
    }
    println!("artifacts written to {}", dir.display());
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { scenario, out } => {
            let sc = load_scenario(&scenario, true)?;
            let dir = out_dir(out, &sc);
            let res = run(&sc, &scenario)?;
            let files = render(&sc, &res.rx);
            let iq: Vec<(&str, &radcom_core::IqStream)> = if sc.output.write_iq {
                vec![("tx.iq", &res.tx), ("rx.iq", &res.rx_stream)]
            } else {
                Vec::new()
            };
            write_all(&dir, &files, &iq)?;
            summary(&res.rx, &dir);
        }
        Command::Capture { iq, config, out } => {
            let sc = load_scenario(&config, false)?;
            let stream = read_iq(&iq)?;
            let dir = out_dir(out, &sc);
            let res = process(&sc, &stream, &iq)?;
            write_all(&dir, &render(&sc, &res), &[])?;
            summary(&res, &dir);
        }
        Command::Params { config } => {
            let cfg = load_frame_config(&config)?;
            let table = params::render(&cfg).map_err(|e| CliError::from_core(&config, "params", e))?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
