//! Domain types and their on-disk formats.
//!
//! Three file formats live here, shared by every pipeline stage:
//!
//! * feature files (`.rrf`): magic `RRF1`, little-endian `u32` count and
//!   dimension, then per-image `u32`-length-prefixed UTF-8 ids, then the
//!   `N x D` row-major `f32` payload;
//! * label files: CSV text, one `image_id,identity,camera` record per line;
//! * track files: text, line `k` holds the whitespace-separated image ids of
//!   track `k`.
//!
//! Readers validate every type invariant and never repair bad input.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const FEATURE_MAGIC: &[u8; 4] = b"RRF1";

/// Identity and camera label of one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageLabel {
    pub identity: u32,
    pub camera: u32,
}

/// An ordered set of L2-comparable embeddings, one row per image id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureSet {
    /// Build a feature set, validating uniqueness, finiteness and shape.
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("feature dimension must be >= 1"));
        }
        if data.len() != ids.len() * dim {
            return Err(Error::validation(format!(
                "feature data has {} values, expected {} ({} ids x dim {})",
                data.len(),
                ids.len() * dim,
                ids.len(),
                dim
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::validation(format!("duplicate image id '{id}'")));
            }
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite feature value {v}")));
        }
        Ok(FeatureSet { ids, dim, data })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Map image id -> row index.
    pub fn index_of(&self) -> BTreeMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }
}

/// Ground-truth (or clustering-derived) labels keyed by image id.
///
/// Backed by a `BTreeMap` so iteration order is deterministic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelTable {
    entries: BTreeMap<String, ImageLabel>,
}

impl LabelTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert one entry; duplicate image ids are a validation error.
    pub fn insert(&mut self, image_id: impl Into<String>, label: ImageLabel) -> Result<()> {
        let image_id = image_id.into();
        if self.entries.contains_key(&image_id) {
            return Err(Error::validation(format!(
                "duplicate image id '{image_id}' in label table"
            )));
        }
        self.entries.insert(image_id, label);
        Ok(())
    }

    pub fn get(&self, image_id: &str) -> Option<ImageLabel> {
        self.entries.get(image_id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Iterate entries in image-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, ImageLabel)> {
        self.entries.iter().map(|(id, l)| (id.as_str(), *l))
    }

    /// Distinct identities, ascending.
    pub fn identities(&self) -> Vec<u32> {
        let set: std::collections::BTreeSet<u32> =
            self.entries.values().map(|l| l.identity).collect();
        set.into_iter().collect()
    }

    /// Resolve labels for an ordered id list; any missing id is a validation
    /// error.
    pub fn resolve(&self, ids: &[String]) -> Result<Vec<ImageLabel>> {
        ids.iter()
            .map(|id| {
                self.get(id)
                    .ok_or_else(|| Error::validation(format!("missing label for image id '{id}'")))
            })
            .collect()
    }
}

/// Gallery track structure: each track is a non-empty group of image ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrackTable {
    tracks: Vec<Vec<String>>,
}

impl TrackTable {
    /// Build from track id lists, rejecting ids that appear in two tracks.
    pub fn new(tracks: Vec<Vec<String>>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (k, track) in tracks.iter().enumerate() {
            if track.is_empty() {
                return Err(Error::validation(format!("track {k} is empty")));
            }
            for id in track {
                if !seen.insert(id.as_str()) {
                    return Err(Error::validation(format!(
                        "image id '{id}' appears in more than one track"
                    )));
                }
            }
        }
        Ok(TrackTable { tracks })
    }

    pub fn tracks(&self) -> &[Vec<String>] {
        &self.tracks
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Drop ids not present in `keep`, then drop tracks left empty.
    pub fn restrict_to(&self, keep: &HashSet<&str>) -> TrackTable {
        let tracks = self
            .tracks
            .iter()
            .map(|t| {
                t.iter()
                    .filter(|id| keep.contains(id.as_str()))
                    .cloned()
                    .collect::<Vec<_>>()
            })
            .filter(|t| !t.is_empty())
            .collect();
        TrackTable { tracks }
    }
}

/// Per-query ordered gallery row indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RankList {
    lists: Vec<Vec<usize>>,
}

impl RankList {
    /// Build from per-query index lists, validating uniqueness and range.
    pub fn new(lists: Vec<Vec<usize>>, gallery_size: usize) -> Result<Self> {
        for (q, list) in lists.iter().enumerate() {
            if list.len() > gallery_size {
                return Err(Error::validation(format!(
                    "query {q}: ranking longer than gallery ({} > {gallery_size})",
                    list.len()
                )));
            }
            let mut seen = vec![false; gallery_size];
            for &g in list {
                if g >= gallery_size {
                    return Err(Error::validation(format!(
                        "query {q}: gallery index {g} out of range (gallery size {gallery_size})"
                    )));
                }
                if seen[g] {
                    return Err(Error::validation(format!(
                        "query {q}: duplicate gallery index {g}"
                    )));
                }
                seen[g] = true;
            }
        }
        Ok(RankList { lists })
    }

    pub(crate) fn from_valid(lists: Vec<Vec<usize>>) -> Self {
        RankList { lists }
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

// ── Feature file I/O ──────────────────────────────────────────────────────────

/// Write a feature set; `read_features(write_features(s)) == s` bit-exactly.
pub fn write_features(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&(set.len() as u32).to_le_bytes())?;
    w.write_all(&(set.dim() as u32).to_le_bytes())?;
    for id in set.ids() {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    for v in set.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::format(format!(
            "bad feature-file magic {:?}, expected {:?}",
            magic, FEATURE_MAGIC
        )));
    }
    let n = read_u32(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        let id = String::from_utf8(buf)
            .map_err(|e| Error::format(format!("image id is not UTF-8: {e}")))?;
        ids.push(id);
    }
    let mut data = Vec::with_capacity(n * dim);
    let mut buf = [0u8; 4];
    for _ in 0..n * dim {
        r.read_exact(&mut buf)?;
        data.push(f32::from_le_bytes(buf));
    }
    FeatureSet::new(ids, dim, data)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

// ── Label file I/O ────────────────────────────────────────────────────────────

/// Read a `image_id,identity,camera` CSV into a label table.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelTable> {
    let r = BufReader::new(File::open(path)?);
    let mut table = LabelTable::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(format!(
                "line {}: expected 'image_id,identity,camera', got '{line}'",
                lineno + 1
            )));
        }
        let identity: u32 = fields[1].parse().map_err(|_| {
            Error::parse(format!("line {}: bad identity '{}'", lineno + 1, fields[1]))
        })?;
        let camera: u32 = fields[2].parse().map_err(|_| {
            Error::parse(format!("line {}: bad camera '{}'", lineno + 1, fields[2]))
        })?;
        table.insert(fields[0], ImageLabel { identity, camera })?;
    }
    Ok(table)
}

/// Write a label table as `image_id,identity,camera` lines, id order.
pub fn write_labels(table: &LabelTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (id, label) in table.iter() {
        writeln!(w, "{id},{},{}", label.identity, label.camera)?;
    }
    w.flush()?;
    Ok(())
}

// ── Track file I/O ────────────────────────────────────────────────────────────

/// Read a track file: line `k` lists the image ids of track `k`.
pub fn read_tracks(path: impl AsRef<Path>) -> Result<TrackTable> {
    let r = BufReader::new(File::open(path)?);
    let mut tracks = Vec::new();
    for line in r.lines() {
        let line = line?;
        let ids: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if !ids.is_empty() {
            tracks.push(ids);
        }
    }
    TrackTable::new(tracks)
}

/// Write a track table, one track per line.
pub fn write_tracks(tracks: &TrackTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for track in tracks.tracks() {
        writeln!(w, "{}", track.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

// ── Submission ────────────────────────────────────────────────────────────────

/// Write per-query top-`top_k` gallery ids, space-separated, one query per
/// line.
pub fn write_submission(
    ranks: &RankList,
    gallery_ids: &[String],
    top_k: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    if top_k == 0 {
        return Err(Error::validation("top_k must be >= 1"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    for list in ranks.lists() {
        let mut line = String::new();
        for (i, &g) in list.iter().take(top_k).enumerate() {
            let id = gallery_ids.get(g).ok_or_else(|| {
                Error::validation(format!(
                    "gallery index {g} out of range ({} ids)",
                    gallery_ids.len()
                ))
            })?;
            if i > 0 {
                line.push(' ');
            }
            line.push_str(id);
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}
