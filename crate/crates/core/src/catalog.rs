//! Part catalog: names, colors, lazily annotated connectors and collision
//! meshes.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::collision::{inset_mesh, CollisionMesh, DEFAULT_INSET};
use crate::connectors::{annotate_part, parse_overrides, AnnotatedConnector, CompatTable, ConnIndex, OverrideFile, PrimitiveTable};
use crate::error::{Error, Result};
use crate::ldraw::{
    decode_text, normalize_name, parse_file, part_description, scan_parsed, DirLibrary, Library, PartScan, RawMesh,
    StructureResolver,
};

/// Two-way map between LDraw color codes and lowercase color names.
#[derive(Debug, Clone, Default)]
pub struct ColorTable {
    by_code: BTreeMap<u32, String>,
    by_name: HashMap<String, u32>,
}

impl ColorTable {
    /// Parses `code<TAB>name` lines; `#` lines are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut t = ColorTable::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: String| Error::DataFile {
                name: "colors".into(),
                message: format!("line {}: {m}", n + 1),
            };
            let (code, name) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected `code<TAB>name`".into()))?;
            let code: u32 = code.trim().parse().map_err(|_| bad(format!("bad color code `{code}`")))?;
            let name = normalize_display(name);
            if name.is_empty() {
                return Err(bad("empty color name".into()));
            }
            if t.by_name.contains_key(&name) || t.by_code.contains_key(&code) {
                return Err(bad(format!("duplicate color entry `{code}` / `{name}`")));
            }
            t.insert(code, &name);
        }
        Ok(t)
    }

    pub fn builtin() -> &'static ColorTable {
        static TABLE: OnceLock<ColorTable> = OnceLock::new();
        TABLE.get_or_init(|| ColorTable::parse(include_str!("../data/colors.tsv")).expect("builtin color table parses"))
    }

    pub fn insert(&mut self, code: u32, name: &str) {
        let name = normalize_display(name);
        if let Some(old) = self.by_code.insert(code, name.clone()) {
            self.by_name.remove(&old);
        }
        self.by_name.insert(name, code);
    }

    pub fn name(&self, code: u32) -> Option<&str> {
        self.by_code.get(&code).map(String::as_str)
    }

    pub fn code(&self, name: &str) -> Option<u32> {
        self.by_name.get(&normalize_display(name)).copied()
    }

    pub fn len(&self) -> usize {
        self.by_code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_code.is_empty()
    }
}

/// Lowercases, drops the reserved `|` and collapses whitespace.
pub fn normalize_display(s: &str) -> String {
    s.replace('|', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

enum PartSource {
    Inline {
        connectors: Vec<AnnotatedConnector>,
        mesh: Option<RawMesh>,
    },
    Library,
}

/// One catalog entry. Connectors and meshes of library parts are computed
/// on first use and cached (errors included).
pub struct PartDef {
    pub id: String,
    pub name: String,
    pub description: String,
    source: PartSource,
    scan: OnceLock<Result<Arc<PartScan>>>,
    connectors: OnceLock<Result<Arc<Vec<AnnotatedConnector>>>>,
    mesh: OnceLock<Result<Option<Arc<CollisionMesh>>>>,
}

impl std::fmt::Debug for PartDef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PartDef").field("id", &self.id).field("name", &self.name).finish_non_exhaustive()
    }
}

impl PartDef {
    /// A part with explicit connectors and optional raw geometry.
    pub fn inline(id: &str, description: &str, connectors: Vec<AnnotatedConnector>, mesh: Option<RawMesh>) -> Self {
        Self::with_source(id, description, PartSource::Inline { connectors, mesh })
    }

    fn with_source(id: &str, description: &str, source: PartSource) -> Self {
        PartDef {
            id: normalize_name(id),
            name: String::new(),
            description: description.to_string(),
            source,
            scan: OnceLock::new(),
            connectors: OnceLock::new(),
            mesh: OnceLock::new(),
        }
    }
}

/// Per-part annotation summary for manual review.
#[derive(Debug, Clone, Serialize)]
pub struct PartReview {
    pub id: String,
    pub name: String,
    pub connectors: usize,
    /// Connector primitives placed with a non-unit scale.
    pub rejected_primitives: Vec<String>,
    pub missing_subfiles: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PartReview {
    pub fn needs_attention(&self) -> bool {
        !self.rejected_primitives.is_empty() || !self.missing_subfiles.is_empty() || self.error.is_some() || self.connectors == 0
    }
}

/// The read-only part catalog.
pub struct Catalog {
    parts: BTreeMap<String, PartDef>,
    names: HashMap<String, String>,
    colors: ColorTable,
    compat: CompatTable,
    primitives: PrimitiveTable,
    overrides: OverrideFile,
    library: Option<Arc<dyn Library>>,
    mesh_dir: Option<PathBuf>,
    inset: f64,
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Catalog").field("parts", &self.parts.len()).finish_non_exhaustive()
    }
}

impl Default for Catalog {
    fn default() -> Self {
        Self::new()
    }
}

impl Catalog {
    /// Empty catalog with the builtin color, pairing and primitive tables.
    pub fn new() -> Self {
        Catalog {
            parts: BTreeMap::new(),
            names: HashMap::new(),
            colors: ColorTable::builtin().clone(),
            compat: CompatTable::builtin().clone(),
            primitives: PrimitiveTable::builtin().clone(),
            overrides: OverrideFile::new(),
            library: None,
            mesh_dir: None,
            inset: DEFAULT_INSET,
        }
    }

    pub fn with_inset(mut self, inset: f64) -> Self {
        self.inset = inset;
        self
    }

    pub fn with_colors(mut self, colors: ColorTable) -> Self {
        self.colors = colors;
        self
    }

    pub fn with_compat(mut self, compat: CompatTable) -> Self {
        self.compat = compat;
        self
    }

    /// Adds a part; a display name already taken gets a ` [<id>]` suffix.
    pub fn add_part(&mut self, mut part: PartDef) -> Result<()> {
        if self.parts.contains_key(&part.id) {
            return Err(Error::DataFile {
                name: "catalog".into(),
                message: format!("duplicate part id {}", part.id),
            });
        }
        let mut name = normalize_display(&part.description);
        if name.is_empty() {
            name = part.id.clone();
        }
        if self.names.contains_key(&name) {
            name = format!("{name} [{}]", part.id);
        }
        part.name = name.clone();
        self.names.insert(name, part.id.clone());
        self.parts.insert(part.id.clone(), part);
        Ok(())
    }

    /// Loads an LDraw library directory. Every `parts/*.dat` (or, without a
    /// `parts/` folder, every top-level `.dat`) is a catalog part. Optional
    /// files in the directory replace builtin tables: `colors.tsv`,
    /// `compatibility.tsv`, `primitives.json`, plus `annotations.json`
    /// (manual connector edits) and `meshes/<part>.tri` (pre-inset meshes).
    pub fn load_dir(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Io {
                path: root.display().to_string(),
                message: "catalog directory not found".into(),
            });
        }
        let read = |name: &str| -> Result<Option<String>> {
            let p = root.join(name);
            if !p.is_file() {
                return Ok(None);
            }
            std::fs::read(&p).map(|b| Some(decode_text(&b))).map_err(|e| Error::io(&p, e))
        };
        let mut cat = Catalog::new();
        if let Some(t) = read("colors.tsv")? {
            cat.colors = ColorTable::parse(&t)?;
        }
        if let Some(t) = read("compatibility.tsv")? {
            cat.compat = CompatTable::parse(&t)?;
        }
        if let Some(t) = read("primitives.json")? {
            cat.primitives = PrimitiveTable::parse(&t)?;
        }
        if let Some(t) = read("annotations.json")? {
            cat.overrides = parse_overrides(&t)?;
        }
        let meshes = root.join("meshes");
        if meshes.is_dir() {
            cat.mesh_dir = Some(meshes);
        }

        let parts_dir = if root.join("parts").is_dir() { root.join("parts") } else { root.to_path_buf() };
        let mut files: Vec<PathBuf> = std::fs::read_dir(&parts_dir)
            .map_err(|e| Error::io(&parts_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("dat")))
            .collect();
        files.sort_by_key(|p| normalize_name(&p.file_name().unwrap_or_default().to_string_lossy()));

        let library = DirLibrary::open(root)?;
        for path in files {
            let id = normalize_name(&path.file_name().unwrap_or_default().to_string_lossy());
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let (lines, _) = parse_file(&decode_text(&bytes), false)?;
            let desc = part_description(&lines).unwrap_or_default();
            cat.add_part(PartDef::with_source(&id, &desc, PartSource::Library))?;
        }
        log::info!("catalog {}: {} parts", root.display(), cat.parts.len());
        cat.library = Some(Arc::new(library));
        Ok(cat)
    }

    /// Uses `library` to resolve library-backed parts added with
    /// [`Catalog::add_library_part`].
    pub fn with_library(mut self, library: Arc<dyn Library>) -> Self {
        self.library = Some(library);
        self
    }

    /// Registers a part whose definition lives in the attached library.
    pub fn add_library_part(&mut self, id: &str, description: &str) -> Result<()> {
        self.add_part(PartDef::with_source(id, description, PartSource::Library))
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn part_ids(&self) -> impl Iterator<Item = &str> {
        self.parts.keys().map(String::as_str)
    }

    pub fn part(&self, id: &str) -> Result<&PartDef> {
        self.parts.get(&normalize_name(id)).ok_or_else(|| Error::UnknownPart(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.parts.contains_key(&normalize_name(id))
    }

    pub fn part_by_name(&self, name: &str) -> Option<&PartDef> {
        self.names.get(name).and_then(|id| self.parts.get(id))
    }

    pub fn part_name(&self, id: &str) -> Result<&str> {
        self.part(id).map(|p| p.name.as_str())
    }

    pub fn colors(&self) -> &ColorTable {
        &self.colors
    }

    pub fn color_name(&self, code: u32) -> Result<&str> {
        self.colors.name(code).ok_or(Error::UnknownColor(code))
    }

    pub fn compat(&self) -> &CompatTable {
        &self.compat
    }

    pub fn primitives(&self) -> &PrimitiveTable {
        &self.primitives
    }

    pub fn inset(&self) -> f64 {
        self.inset
    }

    fn scan(&self, part: &PartDef) -> Result<Arc<PartScan>> {
        part.scan
            .get_or_init(|| {
                let lib = self.library.as_ref().ok_or_else(|| Error::MissingAnnotation(part.id.clone()))?;
                let lines = lib.load(&part.id).ok_or_else(|| Error::UnknownPart(part.id.clone()))?;
                scan_parsed(&lines, lib.as_ref(), &self.primitives, true).map(Arc::new)
            })
            .clone()
    }

    /// Connectors of a part in canonical index order.
    pub fn connectors(&self, id: &str) -> Result<Arc<Vec<AnnotatedConnector>>> {
        let part = self.part(id)?;
        part.connectors
            .get_or_init(|| match &part.source {
                PartSource::Inline { connectors, .. } => Ok(Arc::new(connectors.clone())),
                PartSource::Library => {
                    let scan = self.scan(part)?;
                    let edits = self.overrides.get(&part.id).map(Vec::as_slice).unwrap_or(&[]);
                    annotate_part(&part.id, &scan.primitives, &self.primitives, edits).map(Arc::new)
                }
            })
            .clone()
    }

    pub fn connector(&self, id: &str, index: ConnIndex) -> Result<Option<AnnotatedConnector>> {
        Ok(self.connectors(id)?.get(index.0 as usize).cloned())
    }

    /// Inset collision mesh; `None` for parts without geometry.
    pub fn collision_mesh(&self, id: &str) -> Result<Option<Arc<CollisionMesh>>> {
        let part = self.part(id)?;
        part.mesh
            .get_or_init(|| {
                if let Some(dir) = &self.mesh_dir {
                    let stem = part.id.strip_suffix(".dat").unwrap_or(&part.id).replace(['/', '\\'], "_");
                    let path = dir.join(format!("{stem}.tri"));
                    if path.is_file() {
                        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                        return CollisionMesh::from_tri(&text).map(|m| Some(Arc::new(m)));
                    }
                }
                let raw = match &part.source {
                    PartSource::Inline { mesh, .. } => match mesh {
                        Some(m) => m.clone(),
                        None => return Ok(None),
                    },
                    PartSource::Library => self.scan(part)?.mesh.clone(),
                };
                match inset_mesh(&raw, self.inset) {
                    Ok(m) => Ok(Some(Arc::new(m))),
                    Err(Error::EmptyMesh) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .clone()
    }

    /// Annotation summary for every part, in id order.
    pub fn review(&self) -> Vec<PartReview> {
        self.parts
            .values()
            .map(|p| {
                let mut r = PartReview {
                    id: p.id.clone(),
                    name: p.name.clone(),
                    connectors: 0,
                    rejected_primitives: Vec::new(),
                    missing_subfiles: Vec::new(),
                    error: None,
                };
                if matches!(p.source, PartSource::Library) {
                    match self.scan(p) {
                        Ok(scan) => {
                            r.rejected_primitives = scan
                                .rejected
                                .iter()
                                .map(|x| {
                                    format!(
                                        "{} scale ({:.3}, {:.3}, {:.3})",
                                        x.primitive_name, x.scale.x, x.scale.y, x.scale.z
                                    )
                                })
                                .collect();
                            r.missing_subfiles = scan.missing.clone();
                        }
                        Err(e) => r.error = Some(e.to_string()),
                    }
                }
                match self.connectors(&p.id) {
                    Ok(c) => r.connectors = c.len(),
                    Err(e) => {
                        r.error.get_or_insert(e.to_string());
                    }
                }
                r
            })
            .collect()
    }
}

impl StructureResolver for Catalog {
    fn is_part(&self, name: &str) -> bool {
        self.contains(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectors::Subtype;
    use crate::geometry::{ConnectorFrame, Vec3};
    use crate::ldraw::MemoryLibrary;

    #[test]
    fn color_table_round_trip() {
        let t = ColorTable::builtin();
        assert_eq!(t.name(4), Some("red"));
        assert_eq!(t.code("light grey"), Some(7));
        assert_eq!(t.code("Light  Grey"), Some(7));
        assert_eq!(t.name(22), Some("purple"));
        assert!(ColorTable::parse("4\tred\n5\tred\n").is_err());
        assert!(ColorTable::parse("x\tred\n").is_err());
    }

    #[test]
    fn names_are_normalized_and_disambiguated() {
        let mut c = Catalog::new();
        c.add_part(PartDef::inline("3001.dat", "Brick  2 x 4", vec![], None)).unwrap();
        c.add_part(PartDef::inline("3001b.dat", "brick 2 x 4", vec![], None)).unwrap();
        c.add_part(PartDef::inline("x.dat", "Odd | Name", vec![], None)).unwrap();
        assert_eq!(c.part_name("3001.dat").unwrap(), "brick 2 x 4");
        assert_eq!(c.part_name("3001b.dat").unwrap(), "brick 2 x 4 [3001b.dat]");
        assert_eq!(c.part_name("x.dat").unwrap(), "odd name");
        assert_eq!(c.part_by_name("brick 2 x 4 [3001b.dat]").unwrap().id, "3001b.dat");
        assert!(c.add_part(PartDef::inline("3001.DAT", "again", vec![], None)).is_err());
        assert!(matches!(c.part("nope.dat"), Err(Error::UnknownPart(_))));
    }

    #[test]
    fn library_part_is_annotated_lazily() {
        let mut lib = MemoryLibrary::new();
        lib.insert(
            "plate.dat",
            "0 Plate 1 x 2\n1 16 0 0 0 1 0 0 0 1 0 0 0 1 stud.dat\n1 16 20 0 0 1 0 0 0 1 0 0 0 1 stud.dat\n\
             4 16 -10 0 -10 30 0 -10 30 0 10 -10 0 10\n",
        )
        .unwrap();
        let mut c = Catalog::new().with_library(Arc::new(lib));
        c.add_library_part("plate.dat", "Plate 1 x 2").unwrap();
        let conns = c.connectors("plate.dat").unwrap();
        assert_eq!(conns.len(), 2);
        assert!(conns.iter().all(|k| k.subtype == Subtype::Stud));
        assert_eq!(conns[0].frame.origin, Vec3::zeros());
        // a single open quad still yields geometry
        assert!(c.collision_mesh("plate.dat").unwrap().is_some());
        let review = c.review();
        assert_eq!(review.len(), 1);
        assert_eq!(review[0].connectors, 2);
    }

    #[test]
    fn inline_part_without_mesh() {
        let mut c = Catalog::new();
        let frame = ConnectorFrame::new(Vec3::zeros(), -Vec3::y(), Vec3::x()).unwrap();
        let k = AnnotatedConnector {
            index: ConnIndex(0),
            subtype: Subtype::Stud,
            frame,
            axle_length: None,
        };
        c.add_part(PartDef::inline("s.dat", "s", vec![k], None)).unwrap();
        assert_eq!(c.connectors("s.dat").unwrap().len(), 1);
        assert!(c.collision_mesh("s.dat").unwrap().is_none());
        assert!(c.connector("s.dat", ConnIndex(3)).unwrap().is_none());
    }
}
