//! Plain-text instance and solution formats.
//!
//! Instance (UTF-8, `#` starts a comment, indices 0-based):
//!
//! ```text
//! p gst12 <nodes> <edges> <groups>
//! e <u> <v>          # one per edge
//! r <t1> ... <tj>    # one per requirement group
//! ```
//!
//! Solution:
//!
//! ```text
//! s <cost>
//! f <u> <v>          # one per connection
//! ```

use std::fmt::Write as _;

use gst12::instance::{ConnectionSet, Instance, MetricGraph, Node, Pair};
use gst12::{Error, Result};

fn parse_err(line_no: usize, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("line {line_no}: {msg}"))
}

fn parse_num(line_no: usize, tok: &str, what: &str) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| parse_err(line_no, format!("invalid {what} `{tok}`")))
}

/// Significant (line number, tokenized content) pairs of `text`.
fn significant_lines(text: &str) -> Vec<(usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let body = line.split('#').next().unwrap_or("");
            let toks: Vec<&str> = body.split_whitespace().collect();
            if toks.is_empty() {
                None
            } else {
                Some((i + 1, toks))
            }
        })
        .collect()
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let lines = significant_lines(text);
    let Some(((first_no, header), rest)) = lines.split_first().map(|(h, r)| (h.clone(), r))
    else {
        return Err(Error::InvalidArgument("empty instance file".into()));
    };
    if header.len() != 5 || header[0] != "p" || header[1] != "gst12" {
        return Err(parse_err(first_no, "expected header `p gst12 <n> <m> <k>`"));
    }
    let n = parse_num(first_no, header[2], "node count")?;
    let m = parse_num(first_no, header[3], "edge count")?;
    let k = parse_num(first_no, header[4], "group count")?;

    let mut edges: Vec<(Node, Node)> = Vec::with_capacity(m);
    let mut seen = std::collections::BTreeSet::new();
    let mut groups: Vec<std::collections::BTreeSet<Node>> = Vec::with_capacity(k);
    for (line_no, toks) in rest {
        match toks[0] {
            "e" => {
                if toks.len() != 3 {
                    return Err(parse_err(*line_no, "expected `e <u> <v>`"));
                }
                let u = parse_num(*line_no, toks[1], "node")?;
                let v = parse_num(*line_no, toks[2], "node")?;
                if u >= n || v >= n {
                    return Err(parse_err(*line_no, format!("node out of range (n = {n})")));
                }
                if u == v {
                    return Err(parse_err(*line_no, "self-loop"));
                }
                if !seen.insert(Pair::new(u, v)) {
                    return Err(parse_err(*line_no, "duplicate edge"));
                }
                edges.push((u, v));
            }
            "r" => {
                if toks.len() < 2 {
                    return Err(parse_err(*line_no, "requirement line without terminals"));
                }
                let mut g = std::collections::BTreeSet::new();
                for t in &toks[1..] {
                    let t = parse_num(*line_no, t, "terminal")?;
                    if t >= n {
                        return Err(parse_err(*line_no, format!("terminal out of range (n = {n})")));
                    }
                    g.insert(t);
                }
                groups.push(g);
            }
            other => return Err(parse_err(*line_no, format!("unknown record `{other}`"))),
        }
    }
    if edges.len() != m {
        return Err(Error::InvalidArgument(format!(
            "header promises {m} edges, found {}",
            edges.len()
        )));
    }
    if groups.len() != k {
        return Err(Error::InvalidArgument(format!(
            "header promises {k} requirement groups, found {}",
            groups.len()
        )));
    }
    let graph = MetricGraph::new(n, edges)?;
    Instance::new(graph, groups)
}

pub fn write_instance(inst: &Instance) -> String {
    let g = inst.graph();
    let reqs = inst.requirements();
    let mut out = String::new();
    let _ = writeln!(out, "p gst12 {} {} {}", g.node_count(), g.edge_count(), reqs.len());
    for e in g.edges() {
        let _ = writeln!(out, "e {} {}", e.lo(), e.hi());
    }
    for group in reqs.groups() {
        let toks: Vec<String> = group.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(out, "r {}", toks.join(" "));
    }
    out
}

pub fn parse_solution(text: &str) -> Result<(u64, ConnectionSet)> {
    let lines = significant_lines(text);
    let Some(((first_no, header), rest)) = lines.split_first().map(|(h, r)| (h.clone(), r))
    else {
        return Err(Error::InvalidArgument("empty solution file".into()));
    };
    if header.len() != 2 || header[0] != "s" {
        return Err(parse_err(first_no, "expected header `s <cost>`"));
    }
    let cost = header[1]
        .parse::<u64>()
        .map_err(|_| parse_err(first_no, format!("invalid cost `{}`", header[1])))?;
    let mut f = ConnectionSet::new();
    for (line_no, toks) in rest {
        if toks.len() != 3 || toks[0] != "f" {
            return Err(parse_err(*line_no, "expected `f <u> <v>`"));
        }
        let u = parse_num(*line_no, toks[1], "node")?;
        let v = parse_num(*line_no, toks[2], "node")?;
        let p = Pair::try_new(u, v)?;
        if !f.insert(p) {
            return Err(parse_err(*line_no, "duplicate connection"));
        }
    }
    Ok((cost, f))
}

pub fn write_solution(f: &ConnectionSet, cost: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "s {cost}");
    for p in f.iter() {
        let _ = writeln!(out, "f {} {}", p.lo(), p.hi());
    }
    out
}
