//! Typed connector taxonomy, pairing rules and per-part annotation.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConnectorFrame, Mat3, Vec3};
use crate::ldraw::PrimitiveRef;

/// The five connection families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectorFamily {
    Stud,
    Hinge,
    Axle,
    Ball,
    Fixed,
}

impl ConnectorFamily {
    pub const ALL: [ConnectorFamily; 5] = [
        ConnectorFamily::Stud,
        ConnectorFamily::Hinge,
        ConnectorFamily::Axle,
        ConnectorFamily::Ball,
        ConnectorFamily::Fixed,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ConnectorFamily::Stud => "stud",
            ConnectorFamily::Hinge => "hinge",
            ConnectorFamily::Axle => "axle",
            ConnectorFamily::Ball => "ball",
            ConnectorFamily::Fixed => "fixed",
        }
    }

    /// Whether the axial offset is a free parameter.
    pub fn slides(self) -> bool {
        dof_spec(self).has_slide
    }
}

impl fmt::Display for ConnectorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ConnectorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConnectorFamily::ALL
            .into_iter()
            .find(|f| f.token() == s)
            .ok_or_else(|| Error::DataFile {
                name: "family".into(),
                message: format!("unknown connector family `{s}`"),
            })
    }
}

/// Connector subtype. Hinge subtypes carry a kind name so that the pair
/// table can register which in/on variants mate; the empty kind is the
/// plain hinge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subtype {
    Stud,
    OpenStud,
    Hole,
    Tube,
    Post,
    HingeIn(String),
    HingeOn(String),
    Pin,
    Axle,
    PinSocket,
    AxleSocket,
    Bar,
    Clip,
    Towball,
    TowballSocket,
    TechnicBall,
    TechnicSocket,
    FixedIn,
    FixedOn,
}

impl Subtype {
    pub fn family(&self) -> ConnectorFamily {
        use Subtype::*;
        match self {
            Stud | OpenStud | Hole | Tube | Post => ConnectorFamily::Stud,
            HingeIn(_) | HingeOn(_) => ConnectorFamily::Hinge,
            Pin | Axle | PinSocket | AxleSocket | Bar | Clip => ConnectorFamily::Axle,
            Towball | TowballSocket | TechnicBall | TechnicSocket => ConnectorFamily::Ball,
            FixedIn | FixedOn => ConnectorFamily::Fixed,
        }
    }

    /// Token used in build sequences. Tokens are unique within a family.
    pub fn token(&self) -> String {
        use Subtype::*;
        let s = match self {
            Stud => "stud",
            OpenStud => "open_stud",
            Hole => "hole",
            Tube => "tube",
            Post => "post",
            HingeIn(k) if k.is_empty() => "in",
            HingeOn(k) if k.is_empty() => "on",
            HingeIn(k) => return format!("in-{k}"),
            HingeOn(k) => return format!("on-{k}"),
            Pin => "pin",
            Axle => "axle",
            PinSocket => "pin_socket",
            AxleSocket => "axle_socket",
            Bar => "bar",
            Clip => "clip",
            Towball => "towball",
            TowballSocket => "towball_socket",
            TechnicBall => "technic_ball",
            TechnicSocket => "technic_socket",
            FixedIn => "in",
            FixedOn => "on",
        };
        s.to_string()
    }

    /// Parses a subtype token within `family`.
    pub fn parse(family: ConnectorFamily, token: &str) -> Option<Subtype> {
        use Subtype::*;
        let st = match (family, token) {
            (ConnectorFamily::Stud, "stud") => Stud,
            (ConnectorFamily::Stud, "open_stud") => OpenStud,
            (ConnectorFamily::Stud, "hole") => Hole,
            (ConnectorFamily::Stud, "tube") => Tube,
            (ConnectorFamily::Stud, "post") => Post,
            (ConnectorFamily::Hinge, "in") => HingeIn(String::new()),
            (ConnectorFamily::Hinge, "on") => HingeOn(String::new()),
            (ConnectorFamily::Hinge, t) => {
                let (side, kind) = t.split_once('-')?;
                if kind.is_empty() || !kind.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return None;
                }
                match side {
                    "in" => HingeIn(kind.to_string()),
                    "on" => HingeOn(kind.to_string()),
                    _ => return None,
                }
            }
            (ConnectorFamily::Axle, "pin") => Pin,
            (ConnectorFamily::Axle, "axle") => Axle,
            (ConnectorFamily::Axle, "pin_socket") => PinSocket,
            (ConnectorFamily::Axle, "axle_socket") => AxleSocket,
            (ConnectorFamily::Axle, "bar") => Bar,
            (ConnectorFamily::Axle, "clip") => Clip,
            (ConnectorFamily::Ball, "towball") => Towball,
            (ConnectorFamily::Ball, "towball_socket") => TowballSocket,
            (ConnectorFamily::Ball, "technic_ball") => TechnicBall,
            (ConnectorFamily::Ball, "technic_socket") => TechnicSocket,
            (ConnectorFamily::Fixed, "in") => FixedIn,
            (ConnectorFamily::Fixed, "on") => FixedOn,
            _ => return None,
        };
        Some(st)
    }

    /// Subtypes that may take part in several edges at once (a bar carries
    /// several clips, an axle passes through several sockets).
    pub fn multi_accept(&self) -> bool {
        matches!(self, Subtype::Bar | Subtype::Axle)
    }
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// Degrees of freedom of a connection family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofSpec {
    pub rotational_dof: u8,
    pub has_flip: bool,
    pub has_slide: bool,
}

pub fn dof_spec(family: ConnectorFamily) -> DofSpec {
    let (rotational_dof, has_flip, has_slide) = match family {
        ConnectorFamily::Stud => (1, false, false),
        ConnectorFamily::Hinge => (1, true, false),
        ConnectorFamily::Axle => (1, true, true),
        ConnectorFamily::Ball => (3, false, false),
        ConnectorFamily::Fixed => (0, false, false),
    };
    DofSpec {
        rotational_dof,
        has_flip,
        has_slide,
    }
}

/// Relative polarity of the two principal axes that counts as `flip = false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alignment {
    /// Principal axes anti-parallel (connectors face each other).
    Opposed,
    /// Principal axes parallel.
    Aligned,
}

/// Canonical alignment per family. Connector axes point out of their part,
/// so mated connectors face each other in every family.
pub fn canonical_alignment(family: ConnectorFamily) -> Alignment {
    match family {
        ConnectorFamily::Stud
        | ConnectorFamily::Hinge
        | ConnectorFamily::Axle
        | ConnectorFamily::Ball
        | ConnectorFamily::Fixed => Alignment::Opposed,
    }
}

/// Symmetric pairing table loaded from a versioned data file.
#[derive(Debug, Clone, Default)]
pub struct CompatTable {
    pairs: HashSet<(Subtype, Subtype)>,
}

pub const DEFAULT_COMPAT_TABLE: &str = include_str!("../data/compatibility.tsv");

impl CompatTable {
    /// Parses `version 1` followed by `family subtype subtype` rows.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::DataFile {
            name: "compatibility table".into(),
            message: format!("line {line}: {message}"),
        };
        let mut table = CompatTable::default();
        let mut version = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if version.is_none() {
                match tok.as_slice() {
                    ["version", "1"] => {
                        version = Some(1);
                        continue;
                    }
                    _ => return Err(bad(i + 1, "expected `version 1` header".into())),
                }
            }
            let [fam, a, b] = tok.as_slice() else {
                return Err(bad(i + 1, format!("expected 3 fields, got {}", tok.len())));
            };
            let fam: ConnectorFamily = fam.parse().map_err(|_| bad(i + 1, format!("unknown family `{fam}`")))?;
            let a = Subtype::parse(fam, a).ok_or_else(|| bad(i + 1, format!("unknown subtype `{a}`")))?;
            let b = Subtype::parse(fam, b).ok_or_else(|| bad(i + 1, format!("unknown subtype `{b}`")))?;
            table.insert(a, b);
        }
        if version.is_none() {
            return Err(bad(0, "missing version header".into()));
        }
        Ok(table)
    }

    pub fn insert(&mut self, a: Subtype, b: Subtype) {
        self.pairs.insert((a.clone(), b.clone()));
        self.pairs.insert((b, a));
    }

    pub fn compatible(&self, a: &Subtype, b: &Subtype) -> bool {
        a.family() == b.family() && self.pairs.contains(&(a.clone(), b.clone()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn builtin() -> &'static CompatTable {
        static TABLE: OnceLock<CompatTable> = OnceLock::new();
        TABLE.get_or_init(|| CompatTable::parse(DEFAULT_COMPAT_TABLE).expect("shipped compatibility table parses"))
    }
}

/// Pairing rule using the shipped table.
pub fn compatible(a: &Subtype, b: &Subtype) -> bool {
    CompatTable::builtin().compatible(a, b)
}

/// Connector index within a part, rendered as `a..z, aa, ab, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConnIndex(pub u32);

impl ConnIndex {
    pub fn letters(self) -> String {
        index_letters(self.0 as usize)
    }

    pub fn parse(s: &str) -> Option<ConnIndex> {
        parse_index_letters(s).and_then(|v| u32::try_from(v).ok()).map(ConnIndex)
    }
}

impl fmt::Display for ConnIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.letters())
    }
}

impl Serialize for ConnIndex {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.letters())
    }
}

impl<'de> Deserialize<'de> for ConnIndex {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ConnIndex::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("bad connector index `{s}`")))
    }
}

/// Bijective base-26: 0 → a, 25 → z, 26 → aa, 27 → ab, …
pub fn index_letters(mut n: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

pub fn parse_index_letters(s: &str) -> Option<usize> {
    if s.is_empty() || s.len() > 12 || !s.bytes().all(|b| b.is_ascii_lowercase()) {
        return None;
    }
    let mut n: usize = 0;
    for b in s.bytes() {
        n = n.checked_mul(26)?.checked_add((b - b'a') as usize + 1)?;
    }
    Some(n - 1)
}

/// One typed attachment site of a part, in part-local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedConnector {
    pub index: ConnIndex,
    pub subtype: Subtype,
    pub frame: ConnectorFrame,
    /// Axial extent in LDU along `frame.principal`, starting at the origin.
    pub axle_length: Option<f64>,
}

impl AnnotatedConnector {
    pub fn family(&self) -> ConnectorFamily {
        self.subtype.family()
    }

    pub fn length(&self) -> f64 {
        self.axle_length.unwrap_or(0.0)
    }
}

/// A connector site before canonical indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub subtype: Subtype,
    pub frame: ConnectorFrame,
    pub axle_length: Option<f64>,
}

/// Entry of the connector-primitive table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub name: String,
    pub family: ConnectorFamily,
    pub subtype: String,
    pub origin: [f64; 3],
    pub principal: [f64; 3],
    pub reference: [f64; 3],
    #[serde(default)]
    pub axle_length: Option<f64>,
    /// Length scales with the primitive's stretch along its principal axis.
    #[serde(default)]
    pub axial_scale: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PrimitiveTableFile {
    version: u32,
    #[serde(default)]
    comment: Option<String>,
    primitives: Vec<PrimitiveSpec>,
}

pub const DEFAULT_PRIMITIVE_TABLE: &str = include_str!("../data/primitives.json");

/// Maps LDraw primitive file names to connector sites.
#[derive(Debug, Clone, Default)]
pub struct PrimitiveTable {
    entries: HashMap<String, (PrimitiveSpec, Subtype)>,
}

/// Scale tolerance on singular values of a composed primitive transform.
pub const UNIT_SCALE_TOLERANCE: f64 = 1e-3;

impl PrimitiveTable {
    pub fn parse(json: &str) -> Result<Self> {
        let bad = |message: String| Error::DataFile {
            name: "connector primitive table".into(),
            message,
        };
        let file: PrimitiveTableFile = serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
        if file.version != 1 {
            return Err(bad(format!("unsupported version {}", file.version)));
        }
        let mut entries = HashMap::new();
        for spec in file.primitives {
            let st = Subtype::parse(spec.family, &spec.subtype)
                .ok_or_else(|| bad(format!("unknown subtype `{}` for {}", spec.subtype, spec.family)))?;
            entries.insert(crate::ldraw::normalize_name(&spec.name), (spec, st));
        }
        Ok(Self { entries })
    }

    pub fn builtin() -> &'static PrimitiveTable {
        static TABLE: OnceLock<PrimitiveTable> = OnceLock::new();
        TABLE.get_or_init(|| PrimitiveTable::parse(DEFAULT_PRIMITIVE_TABLE).expect("shipped primitive table parses"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(&crate::ldraw::normalize_name(name))
    }

    pub fn get(&self, name: &str) -> Option<&(PrimitiveSpec, Subtype)> {
        self.entries.get(&crate::ldraw::normalize_name(name))
    }

    /// Checks the composed linear map of a reference to `name`. Returns the
    /// axial stretch factor on success.
    pub fn accepts_scale(&self, name: &str, linear: &Mat3) -> Option<f64> {
        let (spec, _) = self.get(name)?;
        if spec.axial_scale {
            let p = Vec3::from(spec.principal).normalize();
            let r = Vec3::from(spec.reference).normalize();
            let s = p.cross(&r);
            let (mp, mr, ms) = (linear * p, linear * r, linear * s);
            let unit = |v: &Vec3| (v.norm() - 1.0).abs() <= UNIT_SCALE_TOLERANCE;
            let ortho = mp.normalize().dot(&mr).abs() <= UNIT_SCALE_TOLERANCE
                && mp.normalize().dot(&ms).abs() <= UNIT_SCALE_TOLERANCE
                && mr.dot(&ms).abs() <= UNIT_SCALE_TOLERANCE;
            (unit(&mr) && unit(&ms) && ortho && mp.norm() > 1e-9).then(|| mp.norm())
        } else {
            let sv = crate::geometry::singular_values(linear);
            sv.iter().all(|s| (s - 1.0).abs() <= UNIT_SCALE_TOLERANCE).then_some(1.0)
        }
    }

    /// The site a scanned primitive reference stands for.
    pub fn site_for(&self, prim: &PrimitiveRef) -> Option<Site> {
        let (spec, subtype) = self.get(&prim.primitive_name)?;
        let m = &prim.linear;
        let t = &prim.transform.translation;
        let origin = m * Vec3::from(spec.origin) + t;
        let frame = ConnectorFrame::new(origin, m * Vec3::from(spec.principal), m * Vec3::from(spec.reference)).ok()?;
        let axle_length = spec.axle_length.map(|l| l * prim.axial_scale);
        Some(Site {
            subtype: subtype.clone(),
            frame,
            axle_length,
        })
    }
}

/// One manual annotation edit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OverrideEntry {
    /// Letter index of a procedural site (canonical order before edits).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<String>,
    pub action: OverrideAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<ConnectorFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtype: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub principal_axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axle_length: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum OverrideAction {
    Add,
    Remove,
    Retype,
}

/// Override file: part id → list of edits.
pub type OverrideFile = HashMap<String, Vec<OverrideEntry>>;

pub fn parse_overrides(json: &str) -> Result<OverrideFile> {
    let raw: HashMap<String, Vec<OverrideEntry>> = serde_json::from_str(json).map_err(|e| Error::DataFile {
        name: "annotation overrides".into(),
        message: e.to_string(),
    })?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| (crate::ldraw::normalize_name(&k), v))
        .collect())
}

/// Position tolerance (LDU) for locating a site by origin and for treating
/// two sites as coincident.
const SITE_EPS: f64 = 1e-6;

fn canonical_key(site: &Site) -> [i64; 9] {
    let q = |v: f64| (v * 1e6).round() as i64;
    let f = &site.frame;
    [
        q(f.origin.x),
        q(f.origin.y),
        q(f.origin.z),
        q(f.principal.x),
        q(f.principal.y),
        q(f.principal.z),
        q(f.reference.x),
        q(f.reference.y),
        q(f.reference.z),
    ]
}

/// Sorts sites canonically (origin x → y → z, then axes, then subtype) and
/// assigns letter indices.
pub fn index_sites(part: &str, mut sites: Vec<Site>) -> Result<Vec<AnnotatedConnector>> {
    sites.sort_by(|a, b| {
        canonical_key(a)
            .cmp(&canonical_key(b))
            .then_with(|| a.subtype.cmp(&b.subtype))
    });
    for w in sites.windows(2) {
        let (a, b) = (&w[0].frame, &w[1].frame);
        if (a.origin - b.origin).norm() <= SITE_EPS
            && (a.principal - b.principal).norm() <= SITE_EPS
            && (a.reference - b.reference).norm() <= SITE_EPS
        {
            return Err(Error::DuplicateSite {
                part: part.to_string(),
                origin: [a.origin.x, a.origin.y, a.origin.z],
            });
        }
    }
    Ok(sites
        .into_iter()
        .enumerate()
        .map(|(i, s)| AnnotatedConnector {
            index: ConnIndex(i as u32),
            subtype: s.subtype,
            frame: s.frame,
            axle_length: s.axle_length,
        })
        .collect())
}

/// Merges procedural sites from a primitive scan with manual edits.
pub fn annotate_part(
    part: &str,
    scan: &[PrimitiveRef],
    table: &PrimitiveTable,
    overrides: &[OverrideEntry],
) -> Result<Vec<AnnotatedConnector>> {
    let procedural: Vec<Site> = scan.iter().filter_map(|p| table.site_for(p)).collect();
    let procedural = index_sites(part, procedural)?;
    let mut sites: Vec<Option<Site>> = procedural
        .into_iter()
        .map(|c| {
            Some(Site {
                subtype: c.subtype,
                frame: c.frame,
                axle_length: c.axle_length,
            })
        })
        .collect();

    let err = |message: String| Error::Annotation {
        part: part.to_string(),
        message,
    };

    for (n, ov) in overrides.iter().enumerate() {
        match ov.action {
            OverrideAction::Add => {
                sites.push(Some(site_from_override(ov).map_err(|m| err(format!("override {n}: {m}")))?));
            }
            OverrideAction::Remove | OverrideAction::Retype => {
                let slot = locate_site(&sites, ov).ok_or_else(|| err(format!("override {n} references a nonexistent site")))?;
                if ov.action == OverrideAction::Remove {
                    sites[slot] = None;
                } else {
                    let site = sites[slot].as_mut().expect("located site is live");
                    let fam = ov.family.unwrap_or(site.subtype.family());
                    let tok = ov
                        .subtype
                        .as_deref()
                        .ok_or_else(|| err(format!("override {n}: retype needs a subtype")))?;
                    site.subtype = Subtype::parse(fam, tok).ok_or_else(|| err(format!("override {n}: unknown subtype `{tok}` for {fam}")))?;
                    if let Some(len) = ov.axle_length {
                        site.axle_length = Some(len);
                    }
                }
            }
        }
    }
    index_sites(part, sites.into_iter().flatten().collect())
}

fn locate_site(sites: &[Option<Site>], ov: &OverrideEntry) -> Option<usize> {
    if let Some(letters) = &ov.index {
        let i = parse_index_letters(letters)?;
        return sites.get(i).and_then(|s| s.as_ref()).map(|_| i);
    }
    let origin = Vec3::from(ov.origin?);
    sites.iter().position(|s| {
        s.as_ref().is_some_and(|s| {
            (s.frame.origin - origin).norm() <= 1e-3
                && ov.subtype.as_deref().is_none_or(|t| ov.action == OverrideAction::Retype || s.subtype.token() == t)
        })
    })
}

fn site_from_override(ov: &OverrideEntry) -> std::result::Result<Site, String> {
    let fam = ov.family.ok_or("add needs a family")?;
    let tok = ov.subtype.as_deref().ok_or("add needs a subtype")?;
    let subtype = Subtype::parse(fam, tok).ok_or_else(|| format!("unknown subtype `{tok}` for {fam}"))?;
    let origin = ov.origin.ok_or("add needs an origin")?;
    let p = ov.principal_axis.ok_or("add needs a principal_axis")?;
    let r = ov.reference_axis.ok_or("add needs a reference_axis")?;
    let frame = ConnectorFrame::new(Vec3::from(origin), Vec3::from(p), Vec3::from(r)).map_err(|e| e.to_string())?;
    Ok(Site {
        subtype,
        frame,
        axle_length: ov.axle_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;

    fn st(f: ConnectorFamily, t: &str) -> Subtype {
        Subtype::parse(f, t).unwrap()
    }

    fn all_subtypes() -> Vec<Subtype> {
        let mut v = Vec::new();
        for (f, toks) in [
            (ConnectorFamily::Stud, &["stud", "open_stud", "hole", "tube", "post"][..]),
            (ConnectorFamily::Hinge, &["in", "on", "in-click", "on-click", "in-finger", "on-finger"][..]),
            (ConnectorFamily::Axle, &["pin", "axle", "pin_socket", "axle_socket", "bar", "clip"][..]),
            (ConnectorFamily::Ball, &["towball", "towball_socket", "technic_ball", "technic_socket"][..]),
            (ConnectorFamily::Fixed, &["in", "on"][..]),
        ] {
            for t in toks {
                v.push(st(f, t));
            }
        }
        v
    }

    #[test]
    fn pairing_rules() {
        use ConnectorFamily::*;
        assert!(compatible(&st(Stud, "stud"), &st(Stud, "hole")));
        assert!(compatible(&st(Stud, "stud"), &st(Stud, "tube")));
        assert!(!compatible(&st(Stud, "stud"), &st(Stud, "post")));
        assert!(compatible(&st(Stud, "open_stud"), &st(Stud, "post")));
        assert!(!compatible(&st(Axle, "pin"), &st(Axle, "axle_socket")));
        assert!(compatible(&st(Axle, "axle"), &st(Axle, "pin_socket")));
        assert!(compatible(&st(Axle, "axle"), &st(Axle, "axle_socket")));
        assert!(compatible(&st(Axle, "pin"), &st(Axle, "pin_socket")));
        assert!(compatible(&st(Axle, "clip"), &st(Axle, "bar")));
        assert!(!compatible(&st(Stud, "stud"), &st(Stud, "stud")));
        assert!(compatible(&st(Hinge, "in"), &st(Hinge, "on")));
        assert!(!compatible(&st(Hinge, "in-click"), &st(Hinge, "on-finger")));
        assert!(compatible(&st(Fixed, "in"), &st(Fixed, "on")));
        assert!(compatible(&st(Ball, "towball"), &st(Ball, "towball_socket")));
        assert!(!compatible(&st(Ball, "towball"), &st(Ball, "technic_socket")));
        // same tokens in different families never pair
        assert!(!compatible(&st(Hinge, "in"), &st(Fixed, "on")));
    }

    #[test]
    fn pairing_is_symmetric_and_irreflexive() {
        let all = all_subtypes();
        for a in &all {
            assert!(!compatible(a, a), "{a} pairs with itself");
            for b in &all {
                assert_eq!(compatible(a, b), compatible(b, a));
            }
        }
    }

    #[test]
    fn tube_never_pairs_with_tube_or_between_studs() {
        // four-stud nesting would be a tube↔stud entry with a non-coaxial
        // frame; the table has no geometry-free tube pairing other than
        // stud/open_stud, and the matcher requires coaxial frames.
        let tube = st(ConnectorFamily::Stud, "tube");
        for b in all_subtypes() {
            if compatible(&tube, &b) {
                assert!(matches!(b, Subtype::Stud | Subtype::OpenStud));
            }
        }
    }

    #[test]
    fn dof_table() {
        use ConnectorFamily::*;
        let t = |f| {
            let d = dof_spec(f);
            (d.rotational_dof, d.has_flip, d.has_slide)
        };
        assert_eq!(t(Stud), (1, false, false));
        assert_eq!(t(Hinge), (1, true, false));
        assert_eq!(t(Axle), (1, true, true));
        assert_eq!(t(Ball), (3, false, false));
        assert_eq!(t(Fixed), (0, false, false));
    }

    #[test]
    fn index_alphabet() {
        assert_eq!(index_letters(0), "a");
        assert_eq!(index_letters(25), "z");
        assert_eq!(index_letters(26), "aa");
        assert_eq!(index_letters(28), "ac");
        assert_eq!(index_letters(33), "ah");
        assert_eq!(index_letters(26 + 26 * 26), "aaa");
        for n in 0..2000 {
            assert_eq!(parse_index_letters(&index_letters(n)), Some(n));
        }
        assert_eq!(parse_index_letters(""), None);
        assert_eq!(parse_index_letters("A"), None);
    }

    #[test]
    fn compat_table_rejects_bad_files() {
        assert!(CompatTable::parse("stud stud hole\n").is_err());
        assert!(CompatTable::parse("version 1\nstud stud\n").is_err());
        assert!(CompatTable::parse("version 1\nstud stud pin\n").is_err());
        let t = CompatTable::parse("version 1\nhinge in-x on-y\n").unwrap();
        assert!(t.compatible(&st(ConnectorFamily::Hinge, "on-y"), &st(ConnectorFamily::Hinge, "in-x")));
        assert_eq!(t.len(), 1);
    }

    fn stud_ref(x: f64, y: f64, z: f64) -> PrimitiveRef {
        PrimitiveRef::new("stud.dat", Mat3::identity(), Vec3::new(x, y, z))
    }

    #[test]
    fn annotate_two_studs() {
        let scan = [stud_ref(10.0, 0.0, 0.0), stud_ref(-10.0, 0.0, 0.0)];
        let c = annotate_part("3023.dat", &scan, PrimitiveTable::builtin(), &[]).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|c| c.subtype == Subtype::Stud && c.family() == ConnectorFamily::Stud));
        assert_eq!(c[0].index.letters(), "a");
        assert_eq!(c[1].index.letters(), "b");
        assert_eq!(c[0].frame.origin.x, -10.0);
    }

    #[test]
    fn annotate_manual_ball_only() {
        let ov = OverrideEntry {
            index: None,
            action: OverrideAction::Add,
            family: Some(ConnectorFamily::Ball),
            subtype: Some("towball".into()),
            origin: Some([0.0, -8.0, 0.0]),
            principal_axis: Some([0.0, -1.0, 0.0]),
            reference_axis: Some([1.0, 0.0, 0.0]),
            axle_length: None,
        };
        let c = annotate_part("x.dat", &[], PrimitiveTable::builtin(), &[ov]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].subtype, Subtype::Towball);
    }

    #[test]
    fn annotate_remove_reindexes_canonically() {
        let scan = [
            stud_ref(10.0, 0.0, 10.0),
            stud_ref(-10.0, 0.0, 10.0),
            stud_ref(10.0, 0.0, -10.0),
            stud_ref(-10.0, 0.0, -10.0),
        ];
        // canonical order before edits: (-10,0,-10)=a (-10,0,10)=b (10,0,-10)=c (10,0,10)=d
        let ov = OverrideEntry {
            index: Some("b".into()),
            action: OverrideAction::Remove,
            family: None,
            subtype: None,
            origin: None,
            principal_axis: None,
            reference_axis: None,
            axle_length: None,
        };
        let c = annotate_part("3022.dat", &scan, PrimitiveTable::builtin(), &[ov]).unwrap();
        let got: Vec<(String, [f64; 3])> = c
            .iter()
            .map(|c| (c.index.letters(), [c.frame.origin.x, c.frame.origin.y, c.frame.origin.z]))
            .collect();
        // oracle: sort the surviving origins lexicographically
        let mut expect = vec![[-10.0, 0.0, -10.0], [10.0, 0.0, -10.0], [10.0, 0.0, 10.0]];
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect: Vec<(String, [f64; 3])> = expect.into_iter().enumerate().map(|(i, o)| (index_letters(i), o)).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn annotate_errors() {
        let ov = OverrideEntry {
            index: Some("q".into()),
            action: OverrideAction::Remove,
            family: None,
            subtype: None,
            origin: None,
            principal_axis: None,
            reference_axis: None,
            axle_length: None,
        };
        let e = annotate_part("p.dat", &[stud_ref(0.0, 0.0, 0.0)], PrimitiveTable::builtin(), &[ov]).unwrap_err();
        assert!(matches!(e, Error::Annotation { .. }));

        let dup = [stud_ref(0.0, 0.0, 0.0), stud_ref(0.0, 0.0, 0.0)];
        let e = annotate_part("p.dat", &dup, PrimitiveTable::builtin(), &[]).unwrap_err();
        assert!(matches!(e, Error::DuplicateSite { .. }));
    }

    #[test]
    fn annotation_is_deterministic() {
        let scan: Vec<_> = (0..12).map(|i| stud_ref((i % 4) as f64 * 20.0, 0.0, (i / 4) as f64 * 20.0)).collect();
        let mut rev = scan.clone();
        rev.reverse();
        let a = annotate_part("p.dat", &scan, PrimitiveTable::builtin(), &[]).unwrap();
        let b = annotate_part("p.dat", &rev, PrimitiveTable::builtin(), &[]).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn scaled_primitive_rejected() {
        let t = PrimitiveTable::builtin();
        assert_eq!(t.accepts_scale("stud.dat", &Mat3::identity()), Some(1.0));
        assert_eq!(t.accepts_scale("stud.dat", &(Mat3::identity() * 1.01)), None);
        let stretch = Mat3::from_diagonal(&Vec3::new(1.0, 40.0, 1.0));
        assert_eq!(t.accepts_scale("axle.dat", &stretch), Some(40.0));
        assert_eq!(t.accepts_scale("stud.dat", &stretch), None);
        let _ = RigidTransform::identity();
    }
}
