//! One-step proximal analysis on a random population: closed form against
//! enumeration, the oracle tilt, the calibration constant, the gap identity,
//! and the comparison against DFT and SFT.
//!
//! `cargo run --example proximal_lemmas`

use infosft::distributions::{random_population, PopulationSpec};
use infosft::numerics::logit;
use infosft::proximal::{
    dominance_check, expected_delta_kl, gap_identity_check, gibbs_update, oracle_u, solve_c_star,
    verify_g_positive,
};
use infosft::weighting::WeightRule;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> infosft::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 0.05;
    let spec = PopulationSpec {
        alphabet_size: 20,
        count: 500,
        expert_concentration: PopulationSpec::concentration_for_mean_p(20, 0.85)?,
        min_q: 0.002,
        max_q: d,
        ..PopulationSpec::default()
    };
    let population = random_population(&spec, &mut rng)?;

    let pair = &population[0];
    let star = oracle_u(pair.p(), pair.q())?;
    let out = gibbs_update(pair, star)?;
    println!(
        "pair 0: p = {:.4}, q = {:.4}, u* = {star:.4}",
        pair.p(),
        pair.q()
    );
    println!(
        "  closed {:.12}  enumerated {:.12}  pi(y*) after = {:.12}",
        out.delta_kl_closed,
        out.delta_kl_enumerated,
        out.updated.prob(pair.target())
    );

    let c = solve_c_star(&population)?;
    let gap = gap_identity_check(&population)?;
    println!(
        "p_bar = {:.4}, logit(p_bar) = {:.4}, C* = {c:.4}",
        gap.p_bar,
        logit(gap.p_bar)?
    );
    println!("gap identity: lhs {:.10}  rhs {:.10}", gap.lhs, gap.rhs);

    let dom = dominance_check(&population, d)?;
    println!("E[dKL] with q <= {d}:");
    println!("  infosft {:>10.4}", dom.info_sft);
    println!("  dft     {:>10.4}", dom.dft);
    if let Some(sft) = dom.sft {
        println!("  sft     {sft:>10.4}");
    }
    println!(
        "  oracle  {:>10.4}  (bound {:.4})",
        dom.oracle, dom.oracle_bound
    );
    let oracle = expected_delta_kl(&population, &WeightRule::Oracle { p: gap.p_bar })?;
    println!("  oracle via expected_delta_kl {:.4}", oracle.mean_delta_kl);

    let grid: Vec<f64> = (0..=978).map(|i| 0.01 + i as f64 * 1e-3).collect();
    let g = verify_g_positive(&grid)?;
    println!(
        "G > 0 on [0.01, 0.988]: {} (min {:.3e} at {:.3}); G > 0 up to {:.6}",
        g.all_positive, g.min_value, g.argmin, g.positive_up_to
    );
    Ok(())
}
