//! Line-oriented text mesh format:
//!
//! ```text
//! MIXMESH 1
//! nodes N
//! x y z label        (N lines)
//! tets M
//! a b c d            (M lines)
//! fixed K
//! i ...              (K indices, whitespace separated, any line breaks)
//! back K2
//! i ...
//! ```
//!
//! Edges are not stored; they are re-derived on load.

use std::fmt::Write as _;
use std::path::Path;

use super::{AnatomyLabel, Mesh, Vec3};
use crate::error::{Error, Result};

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::with_capacity(mesh.node_count() * 32 + mesh.tetrahedra.len() * 24);
    s.push_str("MIXMESH 1\n");
    let _ = writeln!(s, "nodes {}", mesh.node_count());
    for (p, l) in mesh.rest_positions.iter().zip(&mesh.node_labels) {
        // `{}` on f64 prints the shortest representation that round-trips.
        let _ = writeln!(s, "{} {} {} {}", p.x, p.y, p.z, l.0);
    }
    let _ = writeln!(s, "tets {}", mesh.tetrahedra.len());
    for t in &mesh.tetrahedra {
        let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    for (name, set) in [("fixed", &mesh.fixed_nodes), ("back", &mesh.back_surface_nodes)] {
        let _ = writeln!(s, "{name} {}", set.len());
        for chunk in set.chunks(16) {
            let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
    }
    s
}

pub fn save_mesh(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, write_mesh(mesh)).map_err(|e| Error::io(path, e))
}

pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("not a text mesh file (invalid UTF-8 at byte {})", e.utf8_error().valid_up_to()),
    })?;
    parse_mesh(&text, path)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() {
                return Ok(l);
            }
        }
        self.line += 1;
        Err(self.err(format!("unexpected end of file, expected {what}")))
    }

    fn header(&mut self, keyword: &str) -> Result<usize> {
        let line = self.next_line(keyword)?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(keyword) {
            return Err(self.err(format!("expected `{keyword} <count>`, found `{line}`")));
        }
        let count = parts
            .next()
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| self.err(format!("missing or malformed count after `{keyword}`")))?;
        Ok(count)
    }

    fn fields<T: std::str::FromStr, const K: usize>(&mut self, what: &str) -> Result<[T; K]> {
        let line = self.next_line(what)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != K {
            return Err(self.err(format!("expected {K} fields for {what}, found {}", parts.len())));
        }
        let mut out = Vec::with_capacity(K);
        for p in parts {
            out.push(
                p.parse::<T>()
                    .map_err(|_| self.err(format!("malformed value `{p}` in {what}")))?,
            );
        }
        out.try_into().map_err(|_| self.err("field count"))
    }

    fn index_list(&mut self, count: usize, what: &str) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let line = self.next_line(what)?;
            for p in line.split_whitespace() {
                out.push(
                    p.parse()
                        .map_err(|_| self.err(format!("malformed index `{p}` in {what}")))?,
                );
            }
        }
        if out.len() != count {
            return Err(self.err(format!("{what}: expected {count} indices, found {}", out.len())));
        }
        Ok(out)
    }
}

pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path,
        line: 0,
    };
    let magic = lines.next_line("header")?;
    if magic != "MIXMESH 1" {
        return Err(lines.err(format!("expected header `MIXMESH 1`, found `{magic}`")));
    }
    let n = lines.header("nodes")?;
    let mut positions = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut max_label = 0u8;
    for _ in 0..n {
        let line = lines.next_line("node record")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(lines.err(format!("node record needs 4 fields, found {}", parts.len())));
        }
        let mut xyz = [0.0; 3];
        for a in 0..3 {
            xyz[a] = parts[a]
                .parse()
                .map_err(|_| lines.err(format!("malformed coordinate `{}`", parts[a])))?;
        }
        let label: u8 = parts[3]
            .parse()
            .map_err(|_| lines.err(format!("malformed label `{}`", parts[3])))?;
        max_label = max_label.max(label);
        positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
        labels.push(AnatomyLabel(label));
    }
    let m = lines.header("tets")?;
    let mut tets = Vec::with_capacity(m);
    for _ in 0..m {
        tets.push(lines.fields::<usize, 4>("tetrahedron")?);
    }
    let k = lines.header("fixed")?;
    let fixed = lines.index_list(k, "fixed node list")?;
    let k2 = lines.header("back")?;
    let back = lines.index_list(k2, "back surface node list")?;
    Mesh::from_parts(positions, tets, labels, fixed, back, max_label as usize)
}
