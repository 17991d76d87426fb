//! Top-U sparsification of one attention score matrix: how many keys survive
//! per query and how the weights change as U shrinks.
//!
//! cargo run --example sparse_attention

use gsabt::spatial::{attention_scores, top_u_sparsify};
use gsabt::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> gsabt::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, d) = (6, 4);
    let q = Tensor::uniform(&[1, n, d], -1.0, 1.0, &mut rng);
    let k = Tensor::uniform(&[1, n, d], -1.0, 1.0, &mut rng);

    for u in [n, 3, 1] {
        let mut tape = Tape::new();
        let (qv, kv) = (tape.constant(q.clone()), tape.constant(k.clone()));
        let s = attention_scores(&mut tape, qv, kv, d)?;
        let (masked, kept) = top_u_sparsify(&mut tape, s, u)?;
        let w = tape.softmax_rows(masked)?;
        println!("U = {u}: {} of {} entries kept", kept.iter().filter(|&&b| b).count(), n * n);
        for row in tape.value(w).data().chunks(n) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
            println!("  {}", cells.join(" "));
        }
    }
    Ok(())
}
