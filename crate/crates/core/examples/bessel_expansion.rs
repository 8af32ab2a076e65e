//! Expands a two-layer sine network into harmonics and checks the truncated
//! sum against the network itself.

use lift::analysis::{bessel_expand, expansion_vs_direct, harmonic_net};

fn main() -> lift::Result<()> {
    let pi = std::f64::consts::PI;
    let omegas = [pi, 3.0 * pi];
    let w1 = vec![vec![0.8, -0.4], vec![0.3, 0.9]];
    let w2 = [0.7, -0.5];
    let grid: Vec<f64> = (0..1024).map(|i| -1.0 + 2.0 * i as f64 / 1023.0).collect();

    for (gamma, residual) in [(1.0, false), (2.0, false), (2.0, true)] {
        let net = harmonic_net(&omegas, &w1, &w2, gamma, residual)?;
        let e = bessel_expand(&net, 8)?;
        let mut terms: Vec<(f64, f64)> = e.frequencies.iter().copied().zip(e.coefficients.iter().copied()).collect();
        terms.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
        println!(
            "gamma {gamma}, residual {residual}: {} harmonics, max deviation {:.2e}, tail bound {:.2e}",
            e.frequencies.len(),
            expansion_vs_direct(&net, &e, &grid)?,
            e.tail_bound
        );
        for (f, c) in terms.iter().take(5) {
            println!("  {:6.2} pi  {c:+.6}", f / pi);
        }
    }
    Ok(())
}
