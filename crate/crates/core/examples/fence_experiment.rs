//! Trains the network with and without border fences on synthetic scenes
//! and prints held-out word recall for both.
//!
//! Optional args: EPOCHS SCENES LR INIT_SCALE SCALES(comma list)

use wordfence_core::experiment::{run_fence_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = ExperimentConfig::default();
    if let Some(e) = args.first() {
        cfg.train.epochs = e.parse()?;
    }
    if let Some(n) = args.get(1) {
        cfg.scenes = n.parse()?;
    }
    if let Some(lr) = args.get(2) {
        cfg.train.learning_rate = lr.parse()?;
    }
    if let Some(s) = args.get(3) {
        cfg.train.weight_init_scale = s.parse()?;
    }
    if let Some(s) = args.get(4) {
        cfg.scales = s.split(',').map(str::parse).collect::<Result<_, _>>()?;
    }
    let start = std::time::Instant::now();
    let result = run_fence_experiment(&cfg)?;
    for arm in [&result.fence, &result.text_only] {
        let r = &arm.report;
        println!(
            "{:?}: recall {:.3} precision {:.3} (tp {} fp {} fn {}), first/last loss {:.4}/{:.4}",
            arm.scheme,
            r.recall,
            r.precision,
            r.tp,
            r.fp,
            r.fn_,
            arm.epoch_losses[0],
            arm.epoch_losses.last().unwrap()
        );
    }
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
