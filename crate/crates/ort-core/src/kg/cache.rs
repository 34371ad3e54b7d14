//! Versioned binary index cache.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic       4 bytes  "ORTK"
//! version     1 byte   currently 1
//! entities    u64 count, then per entry: u32 byte length + UTF-8 bytes
//! relations   same encoding
//! triples     u64 count, then per triple: u32 subject, u32 relation, u32 object
//! ```
//!
//! Only the string tables and the sorted triple id list are persisted; every
//! derived index (adjacency, labels, label membership) is rebuilt on load.
//! Because ids are lexicographic ranks and triples are sorted, the same
//! triple set always serializes to the same bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::KgError;
use crate::kg::store::StringTable;
use crate::kg::KgStore;

const MAGIC: &[u8; 4] = b"ORTK";
const VERSION: u8 = 1;

fn write_table<W: Write>(w: &mut W, names: &[String]) -> Result<(), KgError> {
    w.write_u64::<LittleEndian>(names.len() as u64)?;
    for name in names {
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
    }
    Ok(())
}

fn read_table<R: Read>(r: &mut R, what: &str) -> Result<Vec<String>, KgError> {
    let count = r.read_u64::<LittleEndian>().map_err(|_| truncated(what))?;
    // Guard against absurd counts from corrupt headers before allocating.
    if count > 1 << 33 {
        return Err(KgError::CorruptIndex(format!(
            "{what} table claims {count} entries"
        )));
    }
    let mut names = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut buf = Vec::new();
    for _ in 0..count {
        let len = r.read_u32::<LittleEndian>().map_err(|_| truncated(what))? as usize;
        buf.resize(len, 0);
        r.read_exact(&mut buf).map_err(|_| truncated(what))?;
        let name = std::str::from_utf8(&buf)
            .map_err(|_| KgError::CorruptIndex(format!("{what} table entry is not UTF-8")))?;
        names.push(name.to_owned());
    }
    Ok(names)
}

fn truncated(section: &str) -> KgError {
    KgError::CorruptIndex(format!("file truncated while reading {section}"))
}

impl KgStore {
    /// Serialize the store to `path`. The bytes are a pure function of the
    /// stored triple set.
    pub fn save_index(&self, path: &Path) -> Result<(), KgError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u8(VERSION)?;
        write_table(&mut w, self.entities.names())?;
        write_table(&mut w, self.relations.names())?;
        w.write_u64::<LittleEndian>(self.triples.len() as u64)?;
        for &(s, r, o) in &self.triples {
            w.write_u32::<LittleEndian>(s)?;
            w.write_u32::<LittleEndian>(r)?;
            w.write_u32::<LittleEndian>(o)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a store previously written by [`KgStore::save_index`], rebuilding
    /// all derived indexes. Validates magic, version, table order, triple
    /// order, and id ranges; any mismatch is a structured error.
    pub fn load_index(path: &Path) -> Result<KgStore, KgError> {
        let mut r = BufReader::new(File::open(path)?);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| KgError::BadMagic)?;
        if &magic != MAGIC {
            return Err(KgError::BadMagic);
        }
        let version = r.read_u8().map_err(|_| truncated("header"))?;
        if version != VERSION {
            return Err(KgError::VersionMismatch {
                found: version,
                expected: VERSION,
            });
        }

        let entities = StringTable::from_sorted_names(read_table(&mut r, "entity")?)?;
        let relations = StringTable::from_sorted_names(read_table(&mut r, "relation")?)?;

        let count = r
            .read_u64::<LittleEndian>()
            .map_err(|_| truncated("triple count"))?;
        let mut triples = Vec::with_capacity(count.min(1 << 28) as usize);
        for _ in 0..count {
            let s = r.read_u32::<LittleEndian>().map_err(|_| truncated("triples"))?;
            let rel = r.read_u32::<LittleEndian>().map_err(|_| truncated("triples"))?;
            let o = r.read_u32::<LittleEndian>().map_err(|_| truncated("triples"))?;
            triples.push((s, rel, o));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(KgError::CorruptIndex(
                "trailing bytes after triple section".to_owned(),
            ));
        }
        for pair in triples.windows(2) {
            if pair[0] >= pair[1] {
                return Err(KgError::CorruptIndex(
                    "triple list not strictly sorted".to_owned(),
                ));
            }
        }

        KgStore::assemble(entities, relations, triples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::store::build_index;
    use crate::kg::Triple;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn toy() -> KgStore {
        build_index(vec![
            Triple::new("Lou Seal", "sports.mascot.team", "San Francisco Giants"),
            Triple::new(
                "San Francisco Giants",
                "baseball.team.championship",
                "2014 World Series",
            ),
        ])
    }

    #[test]
    fn round_trip_toy_store() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.ortk");
        let store = toy();
        store.save_index(&path).unwrap();
        let loaded = KgStore::load_index(&path).unwrap();
        assert_eq!(store.stats(), loaded.stats());
        let original: Vec<_> = store.triples().collect();
        let reloaded: Vec<_> = loaded.triples().collect();
        assert_eq!(original, reloaded);
        assert_eq!(
            store.neighbors("Lou Seal", "team"),
            loaded.neighbors("Lou Seal", "team")
        );
        assert_eq!(
            store.entities_with_label("championship"),
            loaded.entities_with_label("championship")
        );
    }

    #[test]
    fn round_trip_random_store_spot_queries() {
        let mut rng = StdRng::seed_from_u64(99);
        let triples: Vec<Triple> = (0..10_000)
            .map(|_| {
                Triple::new(
                    format!("n{}", rng.gen_range(0..3000)),
                    format!("d{}.t{}.p{}", rng.gen_range(0..5), rng.gen_range(0..6), rng.gen_range(0..6)),
                    format!("n{}", rng.gen_range(0..3000)),
                )
            })
            .collect();
        let store = build_index(triples);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rand.ortk");
        store.save_index(&path).unwrap();
        let loaded = KgStore::load_index(&path).unwrap();
        assert_eq!(store.stats(), loaded.stats());
        for i in (0..3000).step_by(97) {
            let name = format!("n{i}");
            assert_eq!(store.incident_edges(&name), loaded.incident_edges(&name));
        }
        for label in store.label_names().map(str::to_owned).collect::<Vec<_>>() {
            assert_eq!(
                store.entities_with_label(&label),
                loaded.entities_with_label(&label)
            );
        }
    }

    #[test]
    fn saves_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.ortk");
        let b = dir.path().join("b.ortk");
        toy().save_index(&a).unwrap();
        toy().save_index(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn input_order_does_not_change_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let t1 = Triple::new("A", "x.p.q", "B");
        let t2 = Triple::new("C", "y.q.r", "D");
        let fwd = build_index(vec![t1.clone(), t2.clone()]);
        let rev = build_index(vec![t2, t1]);
        let a = dir.path().join("fwd.ortk");
        let b = dir.path().join("rev.ortk");
        fwd.save_index(&a).unwrap();
        rev.save_index(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ortk");
        toy().save_index(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        for cut in [3, 4, 5, 20, bytes.len() - 4] {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            let err = KgStore::load_index(&path).unwrap_err();
            assert!(
                matches!(
                    err,
                    KgError::CorruptIndex(_) | KgError::BadMagic | KgError::VersionMismatch { .. }
                ),
                "cut at {cut}: {err}"
            );
        }
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ortk");
        std::fs::write(&path, b"NOPE\x01rest").unwrap();
        assert!(matches!(
            KgStore::load_index(&path).unwrap_err(),
            KgError::BadMagic
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.ortk");
        let mut bytes = std::fs::read({
            let p = dir.path().join("src.ortk");
            toy().save_index(&p).unwrap();
            p
        })
        .unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            KgStore::load_index(&path).unwrap_err(),
            KgError::VersionMismatch { found: 9, expected: 1 }
        ));
    }

    #[test]
    fn trailing_garbage_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ortk");
        toy().save_index(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            KgStore::load_index(&path).unwrap_err(),
            KgError::CorruptIndex(_)
        ));
    }
}
