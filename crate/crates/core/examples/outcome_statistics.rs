//! Kernel density estimates, multi-way Jensen-Shannon divergence and rank
//! correlation on synthetic samples.

use bimanual_constraint::stats::{js_divergence, pearson, spearman, Grid, Kde1d};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut draw = |mu: f64, n: usize| -> Vec<f64> {
        let d = Normal::new(mu, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    };
    for shift in [0.0, 1.0, 3.0, 50.0] {
        let kdes = [draw(0.0, 400), draw(shift, 400), draw(2.0 * shift, 400)].map(|s| Kde1d::scott(s).unwrap());
        let all: Vec<f64> = kdes.iter().flat_map(|k| k.samples().to_vec()).collect();
        let h = kdes.iter().map(Kde1d::bandwidth).fold(0.0, f64::max);
        let grid = Grid::covering(&all, h, 3.0, 2048)?;
        println!("shift {shift:>4}: JS = {:.4} nats (ln 3 = {:.4})", js_divergence(&kdes, &grid)?, 3f64.ln());
    }
    let x = draw(0.0, 300);
    let y: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
    println!("monotone cubic: pearson {:.3}, spearman {:.3}", pearson(&x, &y)?, spearman(&x, &y)?);
    Ok(())
}
