//! Reader and writer for ASCII MSH 2.2 files (3-node triangles plus tagged
//! 2-node boundary lines).

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Mesh, MeshError, Point};

const LINE: u32 = 1;
const TRIANGLE: u32 = 2;
const POINT: u32 = 15;

fn element_name(kind: u32) -> &'static str {
    match kind {
        3 => "4-node quadrangle",
        4 => "4-node tetrahedron",
        5 => "8-node hexahedron",
        6 => "6-node prism",
        7 => "5-node pyramid",
        8 => "3-node line",
        9 => "6-node triangle",
        10 => "9-node quadrangle",
        16 => "8-node quadrangle",
        _ => "unsupported element",
    }
}

pub fn read_gmsh(path: &Path) -> Result<Mesh, MeshError> {
    let text = fs::read_to_string(path)?;
    parse_gmsh(&text)
}

fn parse_err(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::Parse { line, message: message.into() }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let t = l.trim();
            if !t.is_empty() {
                return Some((i + 1, t));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str), MeshError> {
        let last = self.last;
        self.next().ok_or_else(|| parse_err(last + 1, format!("unexpected end of file, expected {what}")))
    }
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, MeshError> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| parse_err(line, format!("expected {what}")))
}

/// Parses MSH 2.2 text. Edge connectivity is rebuilt from the triangles; line
/// elements only contribute boundary tags (their first tag, the physical id).
pub fn parse_gmsh(text: &str) -> Result<Mesh, MeshError> {
    let mut lines = Lines { inner: text.lines().enumerate(), last: 0 };
    let mut seen_format = false;
    let mut nodes: Vec<(usize, Point)> = Vec::new();
    let mut node_index: HashMap<u64, usize> = HashMap::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut tags: BTreeMap<[usize; 2], i32> = BTreeMap::new();

    while let Some((ln, line)) = lines.next() {
        match line {
            "$MeshFormat" => {
                let (ln, l) = lines.expect("format line")?;
                let mut it = l.split_whitespace();
                let version = it.next().unwrap_or("");
                if version != "2.2" {
                    return Err(parse_err(ln, format!("unsupported MSH version {version}, only 2.2 is read")));
                }
                let file_type: u32 = num(it.next(), ln, "file type")?;
                if file_type != 0 {
                    return Err(parse_err(ln, "binary MSH files are not supported"));
                }
                let (ln, l) = lines.expect("$EndMeshFormat")?;
                if l != "$EndMeshFormat" {
                    return Err(parse_err(ln, "expected $EndMeshFormat"));
                }
                seen_format = true;
            }
            "$Nodes" => {
                if !seen_format {
                    return Err(parse_err(ln, "$Nodes before $MeshFormat"));
                }
                let (ln, l) = lines.expect("node count")?;
                let count: usize = num(Some(l), ln, "node count")?;
                nodes.reserve(count);
                for _ in 0..count {
                    let (ln, l) = lines.expect("node")?;
                    let mut it = l.split_whitespace();
                    let id: u64 = num(it.next(), ln, "node id")?;
                    let x: f64 = num(it.next(), ln, "x coordinate")?;
                    let y: f64 = num(it.next(), ln, "y coordinate")?;
                    if node_index.insert(id, nodes.len()).is_some() {
                        return Err(parse_err(ln, format!("duplicate node id {id}")));
                    }
                    nodes.push((ln, [x, y]));
                }
                let (ln, l) = lines.expect("$EndNodes")?;
                if l != "$EndNodes" {
                    return Err(parse_err(ln, "expected $EndNodes"));
                }
            }
            "$Elements" => {
                let (ln, l) = lines.expect("element count")?;
                let count: usize = num(Some(l), ln, "element count")?;
                for _ in 0..count {
                    let (ln, l) = lines.expect("element")?;
                    let fields: Vec<&str> = l.split_whitespace().collect();
                    let kind: u32 = num(fields.get(1).copied(), ln, "element type")?;
                    let ntags: usize = num(fields.get(2).copied(), ln, "tag count")?;
                    let physical: Option<i32> =
                        if ntags > 0 { Some(num(fields.get(3).copied(), ln, "physical tag")?) } else { None };
                    let conn = fields.get(3 + ntags..).unwrap_or(&[]);
                    let lookup = |tok: &str| -> Result<usize, MeshError> {
                        let id: u64 = num(Some(tok), ln, "node reference")?;
                        node_index.get(&id).copied().ok_or_else(|| parse_err(ln, format!("element references unknown node {id}")))
                    };
                    match kind {
                        TRIANGLE => {
                            if conn.len() != 3 {
                                return Err(parse_err(ln, "triangle needs 3 nodes"));
                            }
                            triangles.push([lookup(conn[0])?, lookup(conn[1])?, lookup(conn[2])?]);
                        }
                        LINE => {
                            if conn.len() != 2 {
                                return Err(parse_err(ln, "line needs 2 nodes"));
                            }
                            let (a, b) = (lookup(conn[0])?, lookup(conn[1])?);
                            if let Some(tag) = physical {
                                tags.insert([a.min(b), a.max(b)], tag);
                            }
                        }
                        POINT => {}
                        other => {
                            return Err(parse_err(ln, format!("element type {other} ({}) is not supported", element_name(other))))
                        }
                    }
                }
                let (ln, l) = lines.expect("$EndElements")?;
                if l != "$EndElements" {
                    return Err(parse_err(ln, "expected $EndElements"));
                }
            }
            other if other.starts_with('$') && !other.starts_with("$End") => {
                // unknown section such as $PhysicalNames: skip to its end marker
                let end = format!("$End{}", &other[1..]);
                loop {
                    let (_, l) = lines.expect(&end)?;
                    if l == end {
                        break;
                    }
                }
            }
            _ => return Err(parse_err(ln, format!("unexpected content `{line}`"))),
        }
    }
    if !seen_format {
        return Err(parse_err(1, "missing $MeshFormat section"));
    }
    if triangles.is_empty() {
        return Err(parse_err(lines.last, "no triangles found"));
    }
    let mut used = vec![false; nodes.len()];
    for t in &triangles {
        for &v in t {
            used[v] = true;
        }
    }
    if let Some(v) = used.iter().position(|u| !u) {
        return Err(parse_err(nodes[v].0, "node is not referenced by any triangle"));
    }
    let points = nodes.into_iter().map(|(_, p)| p).collect();
    Mesh::new(points, triangles, &tags)
}

/// Serializes the mesh as MSH 2.2 ASCII. Boundary edges become line elements
/// carrying their tag (untagged edges get physical id 0); triangles carry
/// physical id 1.
pub fn to_gmsh_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(s, "{}", mesh.num_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {:e} {:e} 0", v.id + 1, v.x, v.y);
    }
    s.push_str("$EndNodes\n$Elements\n");
    let boundary: Vec<_> = mesh.edges.iter().filter(|e| e.is_boundary()).collect();
    let _ = writeln!(s, "{}", boundary.len() + mesh.num_triangles());
    let mut id = 1;
    for e in boundary {
        let tag = e.tag().unwrap_or(0);
        let _ = writeln!(s, "{id} 1 2 {tag} {tag} {} {}", e.vertices[0] + 1, e.vertices[1] + 1);
        id += 1;
    }
    for t in &mesh.triangles {
        let v = t.vertices;
        let _ = writeln!(s, "{id} 2 2 1 1 {} {} {}", v[0] + 1, v[1] + 1, v[2] + 1);
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

pub fn write_gmsh(mesh: &Mesh, path: &Path) -> Result<(), MeshError> {
    fs::write(path, to_gmsh_string(mesh))?;
    Ok(())
}
