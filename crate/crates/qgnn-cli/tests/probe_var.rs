// temporary probe for criterion-10 calibration
use qgnn_cli::config::*;
use qgnn_cli::data::from_dataset;
use qgnn_cli::synth::{generate, SbmParams};
use qgnn_cli::train::run_train;

#[test]
fn probe_variance_configs() {
    let data = from_dataset(&generate(&SbmParams { seed: 1, ..SbmParams::preset() }).unwrap(), 1);
    for lr in [0.1f32, 0.05, 0.02] {
        for bits in [2u8, 3] {
            let mut svar = vec![];
            let mut nvar = vec![];
            let mut diverged = 0;
            for seed in 1..=5u64 {
                for (rounding, dest) in [(RoundingMode::Stochastic, 0usize), (RoundingMode::Nearest, 1)] {
                    let cfg = TrainConfig {
                        model: Model::Gcn,
                        precision: PrecisionMode::Quantized,
                        bits: BitsChoice::Fixed(bits),
                        rounding,
                        epochs: 150,
                        hidden: 64,
                        heads: 4,
                        lr,
                        seed,
                        ..Default::default()
                    };
                    match run_train(&cfg, &data, |_| {}) {
                        Ok(out) => {
                            let accs: Vec<f64> = out.records.iter().map(|r| r.val_acc).collect();
                            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
                            if dest == 0 { svar.push(var) } else { nvar.push(var) }
                        }
                        Err(_) => { diverged += 1; }
                    }
                }
            }
            let m = |xs: &Vec<f64>| if xs.is_empty() { f64::NAN } else { xs.iter().sum::<f64>() / xs.len() as f64 };
            eprintln!("lr={lr} B={bits}: stoch var {:?} (mean {:.2e}), nearest var {:?} (mean {:.2e}), diverged {diverged}",
                svar.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>(), m(&svar),
                nvar.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>(), m(&nvar));
        }
    }
}
