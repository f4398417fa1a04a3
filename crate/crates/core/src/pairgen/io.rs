//! Pair corpus CSV: `image_a,image_b,identity,y,fold`.

use std::io::{Read, Write};

use super::PairSample;
use crate::Result;

pub fn write_pairs<W: Write>(w: W, pairs: &[PairSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in pairs {
        out.serialize(p)?;
    }
    if pairs.is_empty() {
        out.write_record(["image_a", "image_b", "identity", "y", "fold"])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pairs<R: Read>(r: R) -> Result<Vec<PairSample>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}
