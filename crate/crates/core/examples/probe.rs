use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smf_core::generator::{self, HRowCovarianceMode, ModelParams};
use smf_core::metrics;
use smf_core::objective::ObjectiveParams;
use smf_core::solver::{self, SolverConfig};
use smf_core::DomainSpec;

fn run_cell(
    m: usize,
    r: usize,
    n: usize,
    sigma_v2: f64,
    rho: f64,
    phi: f64,
    seed: u64,
    cfg: &SolverConfig,
) -> (f64, f64, usize, bool, f64) {
    let domain = DomainSpec::linf_ball(r).unwrap();
    let p = ModelParams {
        m,
        r,
        n,
        sigma_v2,
        psi: generator::psi_from_rho(rho, phi, r).unwrap(),
        phi,
        domain,
        h_row_covariance_mode: HRowCovarianceMode::Identity,
    };
    let g = generator::generate(&p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let params = ObjectiveParams::new(p.sigma_v2, p.psi.clone(), p.phi, p.m, p.r).unwrap();
    let t0 = Instant::now();
    let fr = solver::fit(g.y.view(), &domain, &params, cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let a = metrics::align(g.s_g.view(), fr.s_hat.view(), &domain).unwrap();
    let aligned = a.apply(fr.s_hat.view()).unwrap();
    let sinr_map = metrics::sinr_db(g.s_g.view(), aligned.view()).unwrap();
    let lm = metrics::lmmse_estimate(g.y.view(), g.h_g.view(), p.sigma_v2, &domain).unwrap();
    let al = metrics::align(g.s_g.view(), lm.view(), &domain).unwrap();
    let lm_aligned = al.apply(lm.view()).unwrap();
    let sinr_lmmse = metrics::sinr_db(g.s_g.view(), lm_aligned.view()).unwrap();
    (sinr_map, sinr_lmmse, fr.outer_iters_used, fr.converged, dt)
}

fn main() {
    println!("--- noiseless cells vs inner iteration budget (M=5 r=3 N=500 s2=1e-6) ---");
    for inner in [50usize, 200, 400] {
        for seed in 0..3u64 {
            let cfg = SolverConfig {
                max_outer_iters: 1500,
                rel_obj_tol: 1e-10,
                inner_iters_h: inner,
                inner_iters_s: inner,
                ..Default::default()
            };
            let (map, _l, outers, conv, dt) = run_cell(5, 3, 500, 1e-6, 1.0, 6.0, seed, &cfg);
            println!(
                "inner={inner:3} seed={seed} SINR={map:7.2} dB outers={outers:5} conv={conv} t={dt:.2}s"
            );
        }
    }
}
