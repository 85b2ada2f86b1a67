//! Prints the benchmark convergence tables: `cargo run --release --example tables [example]`.

use dwdg::convergence::{run_convergence, ConvergenceConfig};
use dwdg::problems::Example;

fn main() -> dwdg::Result<()> {
    let which: Vec<Example> = match std::env::args().nth(1) {
        Some(name) => vec![name.parse()?],
        None => vec![Example::Smooth, Example::BoundaryLayer, Example::InteriorArctan],
    };
    for ex in which {
        let problem = ex.build(None)?;
        let levels = ex.table_levels().to_vec();
        let mut masks = vec![None];
        masks.extend(ex.local_mask().map(Some));
        for mask in masks {
            let mut cfg = ConvergenceConfig::new(ex.name(), problem.clone(), levels.clone(), vec![0.0, 5.0]);
            cfg.mask = mask;
            let report = run_convergence(&cfg)?;
            println!("{}", report.to_markdown());
        }
    }
    Ok(())
}
