//! Prints vanilla and two-stage probe curves side by side.
//!
//! `cargo run --release -p ctclab --example tradeoff -- [seeds] [section.key=value ...]`

use ctclab::pipeline::{apply_override, load_experiment_data, train_ctc, train_vanilla, TrainConfig, TrainOptions};

fn main() -> ctclab::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let overrides: Vec<String> = args.collect();
    for seed in 0..seeds {
        let mut cfg = TrainConfig::default();
        cfg.mi.every = 0;
        for o in &overrides {
            apply_override(&mut cfg, o)?;
        }
        cfg.seed = seed;
        if std::env::var("FIXED_DATA").is_err() {
            cfg.data.synthetic.seed = seed;
        }
        let data = load_experiment_data(&cfg.data)?;
        let t0 = std::time::Instant::now();
        let v = train_vanilla(&cfg, &data, TrainOptions::default())?;
        let c = if std::env::var("VANILLA_ONLY").is_ok() { v.clone() } else { train_ctc(&cfg, &data, TrainOptions::default())? };
        println!("seed {seed} ({:.1}s)", t0.elapsed().as_secs_f64());
        println!("epoch  v_probe  v_acc   v_r1    v_trl   c_probe  c_acc   c_r1    c_trl");
        for (a, b) in v.trajectory.records.iter().zip(&c.trajectory.records) {
            if a.epoch % 5 == 0 || a.epoch < 5 {
                println!(
                    "{:>5}  {:.4}  {:.4}  {:.4}  {:.4}   {:.4}  {:.4}  {:.4}  {:.4}",
                    a.epoch, a.mean_probe(), a.test_acc, a.r_at_1, a.train_loss, b.mean_probe(), b.test_acc, b.r_at_1, b.train_loss
                );
            }
        }
        let peak = v.trajectory.records.iter().map(|r| r.mean_probe()).enumerate().fold((0, 0.0), |p, (i, x)| if x > p.1 { (i, x) } else { p });
        println!("vanilla peak {:.4} at record {}", peak.1, peak.0);
    }
    Ok(())
}
