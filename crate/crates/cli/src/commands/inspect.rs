use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use dysaug::corpus::{provenance_path, read_archive_records, read_provenance, ARCHIVE_MAGIC};
use dysaug::nn::{Checkpoint, CHECKPOINT_MAGIC};

use super::require;
use crate::{CliError, Result};

pub fn run(path: &Path, records: bool) -> Result<()> {
    require(path, "input")?;
    let mut magic = [0u8; 4];
    std::fs::File::open(path)?
        .read_exact(&mut magic)
        .map_err(|_| CliError::Config(format!("{} is too short", path.display())))?;
    if &magic == ARCHIVE_MAGIC {
        archive(path, records)
    } else if &magic == CHECKPOINT_MAGIC {
        checkpoint(path)
    } else {
        Err(CliError::Config(format!("{}: neither a feature archive nor a checkpoint", path.display())))
    }
}

fn archive(path: &Path, list: bool) -> Result<()> {
    let recs = read_archive_records(path)?;
    let prov: BTreeMap<String, (String, String, Vec<String>)> = if provenance_path(path).exists() {
        read_provenance(path)?.into_iter().map(|(id, src, tag, st)| (id, (src, tag, st))).collect()
    } else {
        BTreeMap::new()
    };
    let frames: usize = recs.iter().map(|(_, m)| m.cols()).sum();
    let mut channels: Vec<usize> = recs.iter().map(|(_, m)| m.rows()).collect();
    channels.sort_unstable();
    channels.dedup();
    let mut tags: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, tag, _) in prov.values() {
        *tags.entry(tag.as_str()).or_default() += 1;
    }
    println!("kind\tarchive\nrecords\t{}\nframes\t{frames}\nchannels\t{channels:?}", recs.len());
    for (t, n) in &tags {
        println!("tag {t}\t{n}");
    }
    if list {
        println!("id\tchannels\tframes\tsource\tstages");
        for (id, m) in &recs {
            let (src, stages) =
                prov.get(id).map_or(("-".to_string(), String::new()), |(s, _, st)| (s.clone(), st.join(" > ")));
            println!("{id}\t{}\t{}\t{src}\t{stages}", m.rows(), m.cols());
        }
    }
    Ok(())
}

fn checkpoint(path: &Path) -> Result<()> {
    let ck = Checkpoint::<f32>::load(path)?;
    println!("kind\tcheckpoint");
    for (k, v) in &ck.metadata {
        println!("meta {k}\t{v}");
    }
    for (name, net) in &ck.networks {
        println!("network {name}\tlayers={}\tparams={}", net.layers().len(), net.num_parameters());
    }
    Ok(())
}
