//! LDraw text format: structure files (.ldr/.mpd) and part definitions (.dat).
//!
//! Coordinates are kept exactly as written (right-handed, −Y up, LDU).

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, orthonormality_error, singular_values, Mat3, PoseJson, RigidTransform, Vec3};

/// Maximum nesting depth of subfile references.
pub const MAX_DEPTH: usize = 64;
/// Tolerance on `|det − 1|` and on singular values before an instance is
/// treated as scaled or mirrored.
pub const RIGID_TOLERANCE: f64 = 1e-3;

/// Lowercase, forward slashes, trimmed.
pub fn normalize_name(name: &str) -> String {
    name.trim().replace('\\', "/").to_lowercase()
}

/// Decodes UTF-8, falling back to Latin-1.
pub fn decode_text(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.strip_prefix('\u{feff}').unwrap_or(s).to_string(),
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

/// Affine map with a possibly non-orthonormal linear part, as written in
/// type-1 lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub linear: Mat3,
    pub translation: Vec3,
}

impl Affine {
    pub fn identity() -> Self {
        Affine {
            linear: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn then(&self, child: &Affine) -> Affine {
        Affine {
            linear: self.linear * child.linear,
            translation: self.linear * child.translation + self.translation,
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.linear * p + self.translation
    }

    /// The 12 numbers of a type-1 line: `x y z a b c d e f g h i`.
    pub fn from_ldraw(v: &[f64; 12]) -> Affine {
        Affine {
            translation: Vec3::new(v[0], v[1], v[2]),
            linear: Mat3::new(v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11]),
        }
    }

    pub fn is_rigid(&self) -> bool {
        let det = self.linear.determinant();
        (det - 1.0).abs() <= RIGID_TOLERANCE
            && singular_values(&self.linear)
                .iter()
                .all(|s| (s - 1.0).abs() <= RIGID_TOLERANCE)
    }

    /// Nearest rigid transform; exact when the linear part is already
    /// orthonormal to 1e−9.
    pub fn to_rigid(&self) -> RigidTransform {
        let rotation = if orthonormality_error(&self.linear) > crate::geometry::ORTHO_TOLERANCE {
            nearest_rotation(&self.linear)
        } else {
            self.linear
        };
        RigidTransform::new(rotation, self.translation)
    }
}

impl From<&RigidTransform> for Affine {
    fn from(t: &RigidTransform) -> Self {
        Affine {
            linear: t.rotation,
            translation: t.translation,
        }
    }
}

/// One parsed line of an LDraw file.
#[derive(Debug, Clone, PartialEq)]
pub enum LdrawLine {
    /// Type 0. Text after the `0`.
    Meta(String),
    /// Type 1.
    SubFile { color: u32, transform: Affine, name: String },
    /// Type 2 and 5; kept only so line counts stay faithful.
    Edge,
    /// Type 3.
    Triangle { color: u32, vertices: [Vec3; 3] },
    /// Type 4.
    Quad { color: u32, vertices: [Vec3; 4] },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

/// A file as a list of `(line number, line)`.
pub type ParsedFile = Vec<(usize, LdrawLine)>;

fn parse_color(tok: &str) -> Option<u32> {
    if let Some(hex) = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16).ok()
    } else {
        tok.parse().ok()
    }
}

fn parse_floats<const N: usize>(toks: &[&str]) -> Option<[f64; N]> {
    let mut out = [0.0; N];
    for (o, t) in out.iter_mut().zip(toks) {
        *o = t.parse().ok().filter(|v: &f64| v.is_finite())?;
    }
    (toks.len() >= N).then_some(out)
}

fn parse_line(line: &str) -> std::result::Result<Option<LdrawLine>, String> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let (kind, rest) = trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, ""));
    let toks: Vec<&str> = rest.split_whitespace().collect();
    match kind {
        "0" => Ok(Some(LdrawLine::Meta(rest.trim().to_string()))),
        "1" => {
            if toks.len() < 14 {
                return Err(format!("type-1 line needs 14 fields after the line type, found {}", toks.len()));
            }
            let color = parse_color(toks[0]).ok_or_else(|| format!("bad color `{}`", toks[0]))?;
            let nums: [f64; 12] = parse_floats(&toks[1..13]).ok_or("bad number in type-1 line")?;
            // file names may contain spaces: take the remainder of the line
            let mut tail = rest.trim_start();
            for _ in 0..13 {
                tail = tail
                    .split_once(char::is_whitespace)
                    .map(|(_, r)| r.trim_start())
                    .unwrap_or("");
            }
            Ok(Some(LdrawLine::SubFile {
                color,
                transform: Affine::from_ldraw(&nums),
                name: tail.trim_end().to_string(),
            }))
        }
        "2" | "5" => Ok(Some(LdrawLine::Edge)),
        "3" => {
            let color = toks.first().and_then(|t| parse_color(t)).ok_or("bad color in type-3 line")?;
            let v: [f64; 9] = parse_floats(toks.get(1..).unwrap_or(&[])).ok_or("type-3 line needs 9 coordinates")?;
            Ok(Some(LdrawLine::Triangle {
                color,
                vertices: [
                    Vec3::new(v[0], v[1], v[2]),
                    Vec3::new(v[3], v[4], v[5]),
                    Vec3::new(v[6], v[7], v[8]),
                ],
            }))
        }
        "4" => {
            let color = toks.first().and_then(|t| parse_color(t)).ok_or("bad color in type-4 line")?;
            let v: [f64; 12] = parse_floats(toks.get(1..).unwrap_or(&[])).ok_or("type-4 line needs 12 coordinates")?;
            Ok(Some(LdrawLine::Quad {
                color,
                vertices: [
                    Vec3::new(v[0], v[1], v[2]),
                    Vec3::new(v[3], v[4], v[5]),
                    Vec3::new(v[6], v[7], v[8]),
                    Vec3::new(v[9], v[10], v[11]),
                ],
            }))
        }
        other => Err(format!("unknown line type `{other}`")),
    }
}

/// Parses every line. Malformed type-1 lines fail in strict mode and are
/// skipped with a diagnostic otherwise; unknown line types and malformed
/// geometry lines are always skipped with a diagnostic.
pub fn parse_file(text: &str, strict: bool) -> Result<(ParsedFile, Vec<Diagnostic>)> {
    let mut lines = Vec::new();
    let mut diags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        match parse_line(raw) {
            Ok(Some(l)) => lines.push((n, l)),
            Ok(None) => {}
            Err(message) => {
                let is_type1 = raw.trim_start().starts_with("1 ") || raw.trim() == "1";
                if strict && is_type1 {
                    return Err(Error::Parse { line: n, message });
                }
                warn!("line {n}: {message}");
                diags.push(Diagnostic { line: n, message });
            }
        }
    }
    Ok((lines, diags))
}

/// Splits an MPD document at `0 FILE` / `0 NOFILE`. A plain file yields a
/// single unnamed section.
pub fn split_mpd(lines: ParsedFile) -> Vec<(String, ParsedFile)> {
    let mut sections: Vec<(String, ParsedFile)> = Vec::new();
    let mut current: Option<(String, ParsedFile)> = None;
    let mut preamble: ParsedFile = Vec::new();
    let mut saw_file = false;
    for (n, line) in lines {
        if let LdrawLine::Meta(text) = &line {
            let mut it = text.splitn(2, char::is_whitespace);
            let head = it.next().unwrap_or("");
            if head == "FILE" {
                saw_file = true;
                if let Some(done) = current.take() {
                    sections.push(done);
                }
                current = Some((normalize_name(it.next().unwrap_or("")), Vec::new()));
                continue;
            }
            if head == "NOFILE" {
                if let Some(done) = current.take() {
                    sections.push(done);
                }
                continue;
            }
        }
        match current.as_mut() {
            Some((_, body)) => body.push((n, line)),
            None => preamble.push((n, line)),
        }
    }
    if let Some(done) = current.take() {
        sections.push(done);
    }
    if !saw_file {
        return vec![(String::new(), preamble)];
    }
    sections
}

/// Opaque node identifier: the instance's position in parse order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A placed part.
#[derive(Debug, Clone, PartialEq)]
pub struct PartInstance {
    pub node_id: NodeId,
    pub part_id: String,
    pub color: u32,
    pub pose: RigidTransform,
    /// Scaled or mirrored placement; excluded from graph construction.
    pub nonrigid: bool,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    id: NodeId,
    part: String,
    color: u32,
    pose: PoseJson,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    nonrigid: bool,
}

impl Serialize for PartInstance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        InstanceJson {
            id: self.node_id,
            part: self.part_id.clone(),
            color: self.color,
            pose: PoseJson::from(&self.pose),
            nonrigid: self.nonrigid,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PartInstance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = InstanceJson::deserialize(d)?;
        Ok(PartInstance {
            node_id: j.id,
            part_id: normalize_name(&j.part),
            color: j.color,
            pose: RigidTransform::from(&j.pose),
            nonrigid: j.nonrigid,
        })
    }
}

/// Decides what a type-1 reference in a structure file points to.
pub trait StructureResolver {
    /// `name` is a catalog part (a leaf of the flattening).
    fn is_part(&self, name: &str) -> bool;
    /// Contents of an external model file referenced by name, if any.
    fn load_model(&self, _name: &str) -> Option<Vec<u8>> {
        None
    }
}

/// Treats every reference that is not an MPD section as a part.
pub struct AnyPart;

impl StructureResolver for AnyPart {
    fn is_part(&self, _name: &str) -> bool {
        true
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub strict: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Structure {
    pub instances: Vec<PartInstance>,
    pub warnings: Vec<Diagnostic>,
}

impl Structure {
    pub fn rigid_instances(&self) -> Vec<PartInstance> {
        self.instances.iter().filter(|i| !i.nonrigid).cloned().collect()
    }
}

const MAIN_COLOR: u32 = 16;

struct Flattener<'a> {
    resolver: &'a dyn StructureResolver,
    options: &'a ParseOptions,
    sections: HashMap<String, ParsedFile>,
    external: HashMap<String, Option<ParsedFile>>,
    out: Structure,
    missing: Vec<String>,
}

impl Flattener<'_> {
    fn model(&mut self, name: &str) -> Result<Option<ParsedFile>> {
        if let Some(lines) = self.sections.get(name) {
            return Ok(Some(lines.clone()));
        }
        if !self.external.contains_key(name) {
            let loaded = match self.resolver.load_model(name) {
                Some(bytes) => {
                    let (lines, diags) = parse_file(&decode_text(&bytes), self.options.strict)?;
                    self.out.warnings.extend(diags);
                    let mut secs = split_mpd(lines);
                    let (_, main) = secs.remove(0);
                    for (n, body) in secs {
                        self.sections.entry(n).or_insert(body);
                    }
                    Some(main)
                }
                None => None,
            };
            self.external.insert(name.to_string(), loaded);
        }
        Ok(self.external[name].clone())
    }

    fn walk(&mut self, lines: &ParsedFile, placement: &Affine, color: u32, stack: &mut Vec<String>) -> Result<()> {
        if stack.len() > MAX_DEPTH {
            return Err(Error::TooDeep {
                name: stack.last().cloned().unwrap_or_default(),
                limit: MAX_DEPTH,
            });
        }
        for (_, line) in lines {
            let LdrawLine::SubFile { color: c, transform, name } = line else {
                continue;
            };
            let key = normalize_name(name);
            let c = if *c == MAIN_COLOR { color } else { *c };
            let placed = placement.then(transform);
            if let Some(body) = self.model(&key)? {
                if stack.contains(&key) {
                    return Err(Error::Recursive(key));
                }
                stack.push(key);
                self.walk(&body, &placed, c, stack)?;
                stack.pop();
            } else if self.resolver.is_part(&key) {
                let nonrigid = !placed.is_rigid();
                self.out.instances.push(PartInstance {
                    node_id: NodeId(self.out.instances.len() as u32),
                    part_id: key,
                    color: c,
                    pose: placed.to_rigid(),
                    nonrigid,
                });
            } else {
                self.missing.push(key);
            }
        }
        Ok(())
    }
}

/// Parses a structure file into posed part instances, flattening MPD
/// sections and external submodels.
pub fn parse_structure(text: &[u8], resolver: &dyn StructureResolver, options: &ParseOptions) -> Result<Structure> {
    let (lines, warnings) = parse_file(&decode_text(text), options.strict)?;
    let sections = split_mpd(lines);
    if sections.is_empty() {
        return Ok(Structure {
            instances: Vec::new(),
            warnings,
        });
    }
    // the main section stays addressable so self-references are caught
    let (main_name, main) = sections[0].clone();
    let mut f = Flattener {
        resolver,
        options,
        sections: sections.into_iter().collect(),
        external: HashMap::new(),
        out: Structure {
            instances: Vec::new(),
            warnings,
        },
        missing: Vec::new(),
    };
    let mut stack = vec![main_name];
    f.walk(&main, &Affine::identity(), MAIN_COLOR, &mut stack)?;
    if !f.missing.is_empty() {
        let mut m = f.missing;
        m.sort();
        m.dedup();
        return Err(Error::Unresolved(m));
    }
    Ok(f.out)
}

/// Writes instances back as LDraw type-1 lines. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_ldraw(instances: &[PartInstance]) -> String {
    let mut out = String::new();
    for inst in instances {
        let t = &inst.pose.translation;
        let r = inst.pose.rotation_rows();
        out.push_str(&format!("1 {} {} {} {}", inst.color, t.x, t.y, t.z));
        for v in r {
            out.push_str(&format!(" {v}"));
        }
        out.push_str(&format!(" {}\n", inst.part_id));
    }
    out
}

/// Source of part-definition files by (normalized) name.
pub trait Library: Send + Sync {
    fn load(&self, name: &str) -> Option<Arc<ParsedFile>>;
}

/// In-memory library, mostly for tests and generated catalogs.
#[derive(Debug, Default, Clone)]
pub struct MemoryLibrary {
    files: HashMap<String, Arc<ParsedFile>>,
}

impl MemoryLibrary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, text: &str) -> Result<()> {
        let (lines, _) = parse_file(text, true)?;
        self.files.insert(normalize_name(name), Arc::new(lines));
        Ok(())
    }
}

impl Library for MemoryLibrary {
    fn load(&self, name: &str) -> Option<Arc<ParsedFile>> {
        self.files.get(&normalize_name(name)).cloned()
    }
}

/// An LDraw library on disk (`parts/`, `parts/s/`, `p/`, `p/48/`, …).
/// File names are matched case-insensitively.
pub struct DirLibrary {
    index: HashMap<String, PathBuf>,
    cache: Mutex<HashMap<String, Option<Arc<ParsedFile>>>>,
}

impl DirLibrary {
    pub fn open(root: &Path) -> Result<Self> {
        let mut index = HashMap::new();
        for base in [root.join("parts"), root.join("p"), root.to_path_buf()] {
            if base.is_dir() {
                index_dir(&base, &base, &mut index, base == root)?;
            }
        }
        Ok(Self {
            index,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn path_of(&self, name: &str) -> Option<&Path> {
        self.index.get(&normalize_name(name)).map(|p| p.as_path())
    }
}

fn index_dir(base: &Path, dir: &Path, index: &mut HashMap<String, PathBuf>, shallow: bool) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries: Vec<_> = entries.filter_map(|e| e.ok()).map(|e| e.path()).collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            if !shallow {
                index_dir(base, &path, index, false)?;
            }
            continue;
        }
        let rel = path.strip_prefix(base).unwrap_or(&path);
        let key = normalize_name(&rel.to_string_lossy());
        index.entry(key).or_insert(path);
    }
    Ok(())
}

impl Library for DirLibrary {
    fn load(&self, name: &str) -> Option<Arc<ParsedFile>> {
        let key = normalize_name(name);
        if let Some(hit) = self.cache.lock().expect("library cache").get(&key) {
            return hit.clone();
        }
        let loaded = self.index.get(&key).and_then(|path| {
            let bytes = std::fs::read(path).ok()?;
            match parse_file(&decode_text(&bytes), false) {
                Ok((lines, _)) => Some(Arc::new(lines)),
                Err(_) => None,
            }
        });
        self.cache.lock().expect("library cache").insert(key, loaded.clone());
        loaded
    }
}

/// A connector primitive found in a part's reference hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveRef {
    pub primitive_name: String,
    /// Composed linear map, scale included.
    pub linear: Mat3,
    /// Rigid part of the composed placement.
    pub transform: RigidTransform,
    /// Singular values of `linear`.
    pub scale: Vec3,
    /// Stretch along the primitive's principal axis (1 for unit primitives).
    pub axial_scale: f64,
}

impl PrimitiveRef {
    pub fn new(name: &str, linear: Mat3, translation: Vec3) -> Self {
        let affine = Affine { linear, translation };
        PrimitiveRef {
            primitive_name: normalize_name(name),
            linear,
            transform: affine.to_rigid(),
            scale: singular_values(&linear),
            axial_scale: 1.0,
        }
    }
}

/// Triangle soup in part-local LDU.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawMesh {
    pub triangles: Vec<[Vec3; 3]>,
}

#[derive(Debug, Clone, Default)]
pub struct PartScan {
    pub primitives: Vec<PrimitiveRef>,
    /// Connector primitives whose composed scale failed the unit check.
    pub rejected: Vec<PrimitiveRef>,
    pub missing: Vec<String>,
    pub mesh: RawMesh,
}

/// Depth-first walk of a part's subfile references, collecting connector
/// primitives (and, optionally, the flattened triangle mesh).
pub fn scan_primitives(
    part_source: &[u8],
    library: &dyn Library,
    table: &crate::connectors::PrimitiveTable,
    collect_mesh: bool,
) -> Result<PartScan> {
    let (lines, _) = parse_file(&decode_text(part_source), false)?;
    scan_parsed(&lines, library, table, collect_mesh)
}

/// [`scan_primitives`] over an already parsed part file.
pub fn scan_parsed(
    lines: &ParsedFile,
    library: &dyn Library,
    table: &crate::connectors::PrimitiveTable,
    collect_mesh: bool,
) -> Result<PartScan> {
    let mut scan = PartScan::default();
    let mut stack = Vec::new();
    scan_walk(lines, &Affine::identity(), library, table, collect_mesh, &mut stack, &mut scan)?;
    scan.missing.sort();
    scan.missing.dedup();
    Ok(scan)
}

fn scan_walk(
    lines: &ParsedFile,
    placement: &Affine,
    library: &dyn Library,
    table: &crate::connectors::PrimitiveTable,
    collect_mesh: bool,
    stack: &mut Vec<String>,
    scan: &mut PartScan,
) -> Result<()> {
    for (_, line) in lines {
        match line {
            LdrawLine::SubFile { transform, name, .. } => {
                let key = normalize_name(name);
                let placed = placement.then(transform);
                let is_connector = table.contains(&key);
                if is_connector {
                    let mut r = PrimitiveRef::new(&key, placed.linear, placed.translation);
                    match table.accepts_scale(&key, &placed.linear) {
                        Some(axial) => {
                            r.axial_scale = axial;
                            scan.primitives.push(r);
                        }
                        None => scan.rejected.push(r),
                    }
                    if !collect_mesh {
                        continue;
                    }
                }
                if stack.contains(&key) {
                    return Err(Error::Recursive(key));
                }
                if stack.len() >= MAX_DEPTH {
                    return Err(Error::TooDeep { name: key, limit: MAX_DEPTH });
                }
                let Some(body) = library.load(&key) else {
                    if !is_connector {
                        scan.missing.push(key);
                    }
                    continue;
                };
                // connector primitives contribute geometry but no nested sites
                let mut sub = PartScan::default();
                let target = if is_connector { &mut sub } else { &mut *scan };
                stack.push(key);
                scan_walk(&body, &placed, library, table, collect_mesh, stack, target)?;
                stack.pop();
                if is_connector {
                    scan.mesh.triangles.extend(sub.mesh.triangles);
                    scan.missing.extend(sub.missing);
                }
            }
            LdrawLine::Triangle { vertices, .. } if collect_mesh => {
                scan.mesh.triangles.push(vertices.map(|v| placement.apply(&v)));
            }
            LdrawLine::Quad { vertices, .. } if collect_mesh => {
                let v = vertices.map(|v| placement.apply(&v));
                scan.mesh.triangles.push([v[0], v[1], v[2]]);
                scan.mesh.triangles.push([v[0], v[2], v[3]]);
            }
            _ => {}
        }
    }
    Ok(())
}

/// Description from the first type-0 line of a part file.
pub fn part_description(lines: &ParsedFile) -> Option<String> {
    lines.iter().find_map(|(_, l)| match l {
        LdrawLine::Meta(text) if !text.is_empty() => Some(text.clone()),
        _ => None,
    })
}

/// Names referenced anywhere in `lines` (type 1 only).
pub fn referenced_names(lines: &ParsedFile) -> HashSet<String> {
    lines
        .iter()
        .filter_map(|(_, l)| match l {
            LdrawLine::SubFile { name, .. } => Some(normalize_name(name)),
            _ => None,
        })
        .collect()
}
