//! Calibration probe: per-path cell counts, tuple counts, and wall times
//! across scales. Run with --release; arguments: [eps] [delta] [trials].

use ap_trace_core::bm::{hit_cells, sample_path_stream};
use ap_trace_core::detector::enumerate_x_multi;
use ap_trace_core::geometry::APConfig;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eps: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.0625);
    let delta: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.4);
    let trials: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1);
    let horizon: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let cfg = APConfig::new(5, eps, delta, 3).unwrap();
    println!(
        "eps={eps} delta={delta} gap_floor={:.4} defect_ceiling={:.4} rigidity={:.2}",
        cfg.gap_floor(),
        cfg.defect_ceiling(),
        cfg.gap_floor() / cfg.defect_ceiling()
    );
    for t in 0..trials {
        let t0 = Instant::now();
        let path = sample_path_stream(3, horizon, 1e-3, seed, t as u64).unwrap();
        let t_path = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let cells = hit_cells(&path, eps, 1.0);
        let t_cells = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        let stats = enumerate_x_multi(&cells, &cfg, &[5, 6], 0).unwrap();
        let t_enum = t2.elapsed().as_secs_f64();
        println!(
            "trial {t}: cells={} x5={} x6={} t_path={t_path:.3} t_cells={t_cells:.3} t_enum={t_enum:.3}",
            cells.len(),
            stats[0].x_total,
            stats[1].x_total,
        );
    }
}
