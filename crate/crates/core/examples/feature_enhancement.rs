//! Expands a small base feature vector with pairwise normalized differences
//! and triple-wise triangle areas.

use bitdnn::stage1::{enhance, feature_count};

fn main() -> bitdnn::Result<()> {
    let x1 = [0.8, 0.3, 0.5, 0.0];
    let f = enhance(&x1, 1e-8, None)?;

    println!("x1 = {:?}", f.x1);
    let mut k = 0;
    for i in 0..x1.len() {
        for j in i + 1..x1.len() {
            println!("binary({i},{j})       = {:+.4}", f.x2[k]);
            k += 1;
        }
    }
    let mut k = 0;
    for i in 0..x1.len() {
        for j in i + 1..x1.len() {
            for h in j + 1..x1.len() {
                println!("triangular({i},{j},{h}) = {:.4}", f.x3[k]);
                k += 1;
            }
        }
    }
    println!("F_N = {} = {}", f.f_n, feature_count(4, 1, None)?);

    // three points on a line enclose no area
    let line = enhance(&[0.1, 0.2, 0.3], 1e-8, None)?;
    println!("collinear triangle area = {:e}", line.x3[0]);
    Ok(())
}
