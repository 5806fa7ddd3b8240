//! Versioned structured-text serialization for dynamic graphs, so the graph,
//! training, and synchronization stages can run as separate CLI invocations.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::DynamicGraph;
use crate::geometry::Point3;

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphFormatError {
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("unsupported dsgraph version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_dynamic_graph(path: &Path, graph: &DynamicGraph) -> Result<(), GraphFormatError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "dsgraph {GRAPH_FORMAT_VERSION}")?;
    writeln!(out, "camera {}", graph.camera_id.map(i64::from).unwrap_or(-1))?;
    writeln!(out, "nodes {}", graph.node_count())?;
    write!(out, "valid_frames {}", graph.valid_frames().len())?;
    for f in graph.valid_frames() {
        write!(out, " {f}")?;
    }
    writeln!(out)?;
    for (n, t) in graph.trajectories().iter().enumerate() {
        write!(out, "trajectory {n}")?;
        for p in t {
            write!(out, " {} {} {}", p.x, p.y, p.z)?;
        }
        writeln!(out)?;
    }
    writeln!(out, "edges {}", graph.edges().len())?;
    for &(a, b) in graph.edges() {
        writeln!(out, "edge {a} {b}")?;
    }
    Ok(())
}

struct LineParser<'a> {
    line: usize,
    words: std::str::SplitWhitespace<'a>,
}

impl<'a> LineParser<'a> {
    fn expect_word(&mut self, what: &str) -> Result<&'a str, GraphFormatError> {
        self.words.next().ok_or_else(|| GraphFormatError::Malformed {
            line: self.line,
            detail: format!("expected {what}"),
        })
    }

    fn expect<T: std::str::FromStr>(&mut self, what: &str) -> Result<T, GraphFormatError> {
        let w = self.expect_word(what)?;
        w.parse().map_err(|_| GraphFormatError::Malformed {
            line: self.line,
            detail: format!("bad {what}: {w:?}"),
        })
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), GraphFormatError> {
        let w = self.expect_word(kw)?;
        if w == kw {
            Ok(())
        } else {
            Err(GraphFormatError::Malformed {
                line: self.line,
                detail: format!("expected {kw:?}, got {w:?}"),
            })
        }
    }
}

pub fn read_dynamic_graph(path: &Path) -> Result<DynamicGraph, GraphFormatError> {
    let file = std::fs::File::open(path)?;
    parse_dynamic_graph(BufReader::new(file))
}

fn parse_dynamic_graph<R: Read>(reader: BufReader<R>) -> Result<DynamicGraph, GraphFormatError> {
    let mut lines = reader.lines().enumerate();
    let mut next_line = || -> Result<(usize, String), GraphFormatError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(GraphFormatError::Malformed { line: 0, detail: "unexpected end of file".into() }),
        }
    };

    let (ln, header) = next_line()?;
    let mut p = LineParser { line: ln, words: header.split_whitespace() };
    p.expect_keyword("dsgraph")?;
    let version = p.expect_word("version")?;
    if version != GRAPH_FORMAT_VERSION.to_string() {
        return Err(GraphFormatError::Version {
            found: version.to_string(),
            expected: GRAPH_FORMAT_VERSION,
        });
    }

    let (ln, line) = next_line()?;
    let mut p = LineParser { line: ln, words: line.split_whitespace() };
    p.expect_keyword("camera")?;
    let camera: i64 = p.expect("camera id")?;
    let camera_id = if camera < 0 { None } else { Some(camera as u8) };

    let (ln, line) = next_line()?;
    let mut p = LineParser { line: ln, words: line.split_whitespace() };
    p.expect_keyword("nodes")?;
    let nodes: usize = p.expect("node count")?;

    let (ln, line) = next_line()?;
    let mut p = LineParser { line: ln, words: line.split_whitespace() };
    p.expect_keyword("valid_frames")?;
    let frame_count: usize = p.expect("frame count")?;
    let mut valid_frames = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        valid_frames.push(p.expect::<usize>("frame index")?);
    }

    let mut trajectories = Vec::with_capacity(nodes);
    for n in 0..nodes {
        let (ln, line) = next_line()?;
        let mut p = LineParser { line: ln, words: line.split_whitespace() };
        p.expect_keyword("trajectory")?;
        let idx: usize = p.expect("node index")?;
        if idx != n {
            return Err(GraphFormatError::Malformed {
                line: ln,
                detail: format!("trajectory {idx} out of order, expected {n}"),
            });
        }
        let mut t = Vec::with_capacity(frame_count);
        for _ in 0..frame_count {
            let x: f64 = p.expect("x")?;
            let y: f64 = p.expect("y")?;
            let z: f64 = p.expect("z")?;
            t.push(Point3::new(x, y, z));
        }
        trajectories.push(t);
    }

    let (ln, line) = next_line()?;
    let mut p = LineParser { line: ln, words: line.split_whitespace() };
    p.expect_keyword("edges")?;
    let edge_count: usize = p.expect("edge count")?;
    let mut edges = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let (ln, line) = next_line()?;
        let mut p = LineParser { line: ln, words: line.split_whitespace() };
        p.expect_keyword("edge")?;
        let a: usize = p.expect("edge endpoint")?;
        let b: usize = p.expect("edge endpoint")?;
        if a >= b || b >= nodes {
            return Err(GraphFormatError::Malformed {
                line: ln,
                detail: format!("bad edge ({a}, {b}) for {nodes} nodes"),
            });
        }
        edges.push((a, b));
    }

    Ok(DynamicGraph::new(camera_id, valid_frames, trajectories, edges))
}
