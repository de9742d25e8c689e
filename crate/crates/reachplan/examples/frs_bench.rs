//! Timing probe for the full vehicle FRS solve.

use reachplan::frs::{build_program, compute_unicycle_frs, FrsSystem};
use reachplan::sdpsolve::SolveOptions;
use reachplan::vehicle::VehicleParams;

fn main() {
    let p = VehicleParams::default();
    let sys = FrsSystem::unicycle(&p, 1.0);
    let t0 = std::time::Instant::now();
    let built = build_program(&sys, 4).unwrap();
    println!("build: {:.2}s", t0.elapsed().as_secs_f64());
    let t0 = std::time::Instant::now();
    let (sdp, _layout) = built.program.compile().unwrap();
    println!(
        "compile: {:.2}s  rows={} blocks={:?}... n_free={}",
        t0.elapsed().as_secs_f64(),
        sdp.num_rows(),
        &sdp.block_dims[..8.min(sdp.block_dims.len())],
        sdp.n_free
    );
    let opts = SolveOptions { verbose: true, ..SolveOptions::default() };
    let t0 = std::time::Instant::now();
    let cert = compute_unicycle_frs(&p, 1.0, 4, &opts);
    match cert {
        Ok(c) => println!(
            "solved in {:.1}s: iters={} obj={:.6} pres={:.2e} dres={:.2e} gap={:.2e} cert_res={:.2e}",
            t0.elapsed().as_secs_f64(),
            c.diagnostics.iterations,
            c.diagnostics.objective,
            c.diagnostics.primal_residual,
            c.diagnostics.dual_residual,
            c.diagnostics.duality_gap,
            c.diagnostics.certificate_residual
        ),
        Err(e) => println!("FAILED after {:.1}s: {e}", t0.elapsed().as_secs_f64()),
    }
}
