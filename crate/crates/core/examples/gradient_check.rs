//! Central-difference check of the denoiser loss gradient.

use coldbundle::nn::{finite_diff_check, DenseMatrix, Rng};
use coldbundle::diffusion::Denoiser;
use coldbundle::prior::View;

fn main() -> coldbundle::Result<()> {
    let mut rng = Rng::new(3);
    let den = Denoiser::init(View::Bint, 4, 2, 4, 6, 50, &mut rng);
    let x0 = DenseMatrix::from_fn(5, 4, |_, _| rng.normal());
    let xt = DenseMatrix::from_fn(5, 4, |_, _| rng.normal());
    let cond = DenseMatrix::from_fn(5, 2, |_, _| rng.normal());
    let t = [1, 10, 20, 35, 50];
    let params: Vec<Vec<f64>> = den.net.blocks().iter().map(|b| b.to_vec()).collect();
    let mut loss = |blocks: &[Vec<f64>]| {
        let mut d = den.clone();
        for (dst, src) in d.net.blocks_mut().into_iter().zip(blocks) {
            dst.copy_from_slice(src);
        }
        d.loss_and_grad(&x0, &xt, &cond, &t).unwrap()
    };
    for h in [1e-4, 1e-5, 1e-6] {
        let r = finite_diff_check(&mut loss, &params, h, 1e-4);
        let blocks: Vec<String> = r.block_max_rel_err.iter().map(|e| format!("{e:.1e}")).collect();
        println!("h = {h:.0e}: max relative error {:.2e}, per block [{}]", r.max_rel_err, blocks.join(", "));
    }
    Ok(())
}
