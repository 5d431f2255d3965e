//! Filtered ranks: other known answers are not counted as competitors.

use tucker::eval::{filtered_rank, EvalReport};

fn main() -> tucker::Result<()> {
    let scores = [0.9, 2.5, 1.7, 3.1, 0.2];
    let true_o = 2;
    // Objects 1 and 3 are also correct answers to this query.
    let known = [1, 2, 3];
    let raw = filtered_rank(&scores, true_o, &[])?;
    let filtered = filtered_rank(&scores, true_o, &known)?;
    println!("raw rank {raw}, filtered rank {filtered}");

    let report =
        EvalReport::from_ranks(vec![(0, 0, 2), (1, 0, 4), (2, 1, 0)], vec![filtered, 4, 12])?;
    print!("{}", report.to_table());
    print!("{}", report.ranks_csv());
    Ok(())
}
