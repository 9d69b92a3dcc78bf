use clap::Parser;
use qec_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(bundle) => {
            let r = &bundle.report;
            if let Some(l) = &r.learning {
                println!(
                    "learning: {} iterations, converged = {}, J = {:.6}",
                    l.iterations_used, l.converged, l.final_objective
                );
            }
            if let Some(e) = &r.evaluation {
                println!(
                    "accuracy: {:.4}% over {} samples per class",
                    100.0 * e.accuracy,
                    e.sample_count
                );
            }
            if let Some(s) = &r.sweep {
                println!("sweep: {} points", s.len());
            }
            println!(
                "wrote {} files to {}",
                bundle.artifacts.len() + 1,
                bundle.dir.display()
            );
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
