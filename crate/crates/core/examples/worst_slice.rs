//! Worst-slab coverage: the lowest coverage over random slabs
//! `{x : a <= v.x <= b}` holding at least a delta fraction of test points.
//! Here the interval width ignores the noise level, so the noisy half undercovers.

use wacp::data::PiecewiseTask;
use wacp::evaluation::{delta_coverage, marginal_coverage, ws_coverage, PointRecord, SlabFamily};

fn main() -> wacp::Result<()> {
    let task = PiecewiseTask::default();
    let test = task.generate(2000, 11);
    let half_width = 1.0;
    let records: Vec<PointRecord> = test
        .rows
        .iter()
        .zip(&test.labels)
        .map(|(x, &y)| {
            let mu = task.left_slope * x[0] + task.right_slope * x[2];
            PointRecord {
                covered: (y - mu).abs() < half_width,
                set_size: 2.0 * half_width,
                group: None,
            }
        })
        .collect();

    let slabs = SlabFamily::draw(&test.rows, 1000, 5);
    let ws = ws_coverage(&records, &slabs, 0.2)?;
    println!("marginal coverage {:.3}", marginal_coverage(&records)?);
    println!("WS coverage       {:.3} over {} kept slabs", ws.value, ws.kept);
    println!("delta coverage    {:.3}", delta_coverage(&records, &slabs, 0.2)?);
    Ok(())
}
