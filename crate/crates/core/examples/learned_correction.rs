//! Correction factors learned from a merge sample of weighted p-values, and
//! the DKW slack used by the high-probability variants.

use wacp::aggregation::{conservative_ecdf, dkw_epsilon, m_precise, m_star, m_targeted, MergeSample};

fn main() -> wacp::Result<()> {
    let sample = MergeSample::new(vec![0.2, 0.5, 0.9])?;
    for q in [0.1, 0.2, 0.5, 0.9, 1.0] {
        println!("F({q}) = {:.3}", conservative_ecdf(&sample, q));
    }
    let alpha_prime = 0.6;
    println!("m* (every level)      = {}", m_star(&sample).factor);
    println!("targeted, alpha' {alpha_prime}  = {}", m_targeted(&sample, alpha_prime)?.factor);
    println!("precise, alpha' {alpha_prime}   = {}", m_precise(&sample, alpha_prime)?.factor);

    for m in [40, 160, 1000] {
        println!("DKW epsilon, M = {m:>4}, delta 0.05: {:.4}", dkw_epsilon(m, 0.05));
    }
    Ok(())
}
