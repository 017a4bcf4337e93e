// Calibration probe: feasibility structure of the small RIS instance as a
// function of noise power and threshold.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeq_core::env::ris::{beamform, sample_channels, RisConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let gamma_db: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1.0);
    let noise_w: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let cfg = RisConfig {
        ebs_antennas: 4,
        ris_elements: 16,
        users: 2,
        blocks: (2, 2),
        codebook_size: 8,
        power_levels_dbm: vec![0.0, 7.0, 14.0, 21.0],
        sinr_threshold_db: gamma_db,
        noise_w,
        rician_k_db: 10.0,
        clusters: 5,
        steps_per_episode: 1,
        freeze_channels: false,
    };
    let gamma = cfg.gamma_linear();
    let mut rng = ChaCha8Rng::seed_from_u64(12345);
    let draws = 2000;
    let mut feas_max = 0usize;       // (p3, p3), random phases
    let mut feas_min = 0usize;       // (p0, p0), random phases
    let mut feas_mid = 0usize;       // (p2, p2), random phases
    let mut feas_rand = 0usize;      // uniform random action
    let mut any_feas_maxp = 0usize;  // any of 64 random phase configs feasible at max power
    for _ in 0..draws {
        let ch = sample_channels(&cfg, &mut rng);
        let phase: Vec<usize> = (0..4).map(|_| rng.gen_range(0..8)).collect();
        let theta = cfg.build_theta(&phase);
        let check = |pw: &[usize], th: &Vec<num_complex::Complex64>| {
            let out = beamform(&cfg, &ch, th, pw);
            out.sinr.iter().all(|s| *s >= gamma)
        };
        feas_max += check(&[3, 3], &theta) as usize;
        feas_min += check(&[0, 0], &theta) as usize;
        feas_mid += check(&[2, 2], &theta) as usize;
        let rp = [rng.gen_range(0..4), rng.gen_range(0..4)];
        feas_rand += check(&rp, &theta) as usize;
        let mut any = false;
        for _ in 0..64 {
            let ph: Vec<usize> = (0..4).map(|_| rng.gen_range(0..8)).collect();
            let th = cfg.build_theta(&ph);
            if check(&[3, 3], &th) {
                any = true;
                break;
            }
        }
        any_feas_maxp += any as usize;
    }
    let f = |c: usize| c as f64 / draws as f64;
    println!(
        "gamma {gamma_db} dB, noise {noise_w}: maxP {:.3} midP {:.3} minP {:.3} randP {:.3} anyPhase@maxP {:.3}",
        f(feas_max), f(feas_mid), f(feas_min), f(feas_rand), f(any_feas_maxp)
    );
}
