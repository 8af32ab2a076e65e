//! Domain partitioning: locating points, local coordinates and splitting a
//! grid into per-region blocks.

use lift::partition::{grid_partition, PartitionSpec};

fn main() -> lift::Result<()> {
    let spec = PartitionSpec::new(2, 3)?;
    println!("{} regions", spec.region_count());
    for x in [[0.0, 0.0], [0.5, 0.2], [1.0 / 3.0, 2.0 / 3.0], [1.0, 1.0]] {
        let r = spec.locate(&x)?;
        println!("{x:?} -> region {} {:?}, local {:?}", r.flat, r.multi, spec.to_local(&x, &r)?);
    }

    let part = grid_partition(&[6, 6], &spec)?;
    for (r, ids) in part.global.iter().enumerate() {
        println!("region {:>2}: grid points {ids:?}", r + 1);
    }
    let values: Vec<f64> = (0..36).map(f64::from).collect();
    let per_region = part.scatter(&values, 1)?;
    assert_eq!(part.assemble(&per_region, 1)?, values);
    Ok(())
}
