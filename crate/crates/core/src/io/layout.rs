//! Directory convention of a reconstruction project.
//!
//! ```text
//! images/00000000.ppm
//! cams/00000000_cam.txt
//! depths/00000000.pfm, depths/00000000_conf.pfm
//! gt_depths/00000000.pfm
//! pair.txt
//! cloud.ply, gt.ply
//! ```
//!
//! `pair.txt` starts with the view count; each view then has a line with
//! its index and a line `k  src_0 score_0  …  src_{k-1} score_{k-1}` listing
//! source views in decreasing preference.

use std::path::{Path, PathBuf};

use super::{read_bytes, write_bytes};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectLayout {
    pub root: PathBuf,
}

impl ProjectLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn image(&self, view: usize) -> PathBuf {
        self.root.join("images").join(format!("{view:08}.ppm"))
    }

    pub fn cam(&self, view: usize) -> PathBuf {
        self.root.join("cams").join(format!("{view:08}_cam.txt"))
    }

    pub fn depth(&self, view: usize) -> PathBuf {
        self.root.join("depths").join(format!("{view:08}.pfm"))
    }

    pub fn confidence(&self, view: usize) -> PathBuf {
        self.root.join("depths").join(format!("{view:08}_conf.pfm"))
    }

    pub fn gt_depth(&self, view: usize) -> PathBuf {
        self.root.join("gt_depths").join(format!("{view:08}.pfm"))
    }

    pub fn pairs(&self) -> PathBuf {
        self.root.join("pair.txt")
    }

    pub fn gt_cloud(&self) -> PathBuf {
        self.root.join("gt.ply")
    }

    /// Number of consecutive camera files starting at view 0.
    pub fn view_count(&self) -> usize {
        (0..).take_while(|&i| self.cam(i).is_file()).count()
    }
}

pub fn format_pairs(pairs: &[Vec<usize>]) -> String {
    let mut s = format!("{}\n", pairs.len());
    for (i, srcs) in pairs.iter().enumerate() {
        s += &format!("{i}\n{}", srcs.len());
        for (rank, j) in srcs.iter().enumerate() {
            s += &format!(" {j} {}", srcs.len() - rank);
        }
        s.push('\n');
    }
    s
}

pub fn write_pairs(path: &Path, pairs: &[Vec<usize>]) -> Result<()> {
    write_bytes(path, format_pairs(pairs).as_bytes())
}

pub fn read_pairs(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = String::from_utf8(read_bytes(path)?).map_err(|_| Error::parse(path, 1, "pair file is not UTF-8"))?;
    parse_pairs(&text, path)
}

pub fn parse_pairs(text: &str, path: &Path) -> Result<Vec<Vec<usize>>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut next = || lines.next().ok_or_else(|| Error::parse(path, text.lines().count(), "pair file ends early"));
    let int = |line: usize, t: &str| t.parse::<usize>().map_err(|_| Error::parse(path, line, format!("bad integer {t:?}")));
    let (line, first) = next()?;
    let n = int(line, first)?;
    let mut out = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    for _ in 0..n {
        let (line, idx) = next()?;
        let i = int(line, idx)?;
        if i >= n || seen[i] {
            return Err(Error::parse(path, line, format!("view index {i} is out of range or repeated")));
        }
        seen[i] = true;
        let (line, body) = next()?;
        let tokens: Vec<&str> = body.split_whitespace().collect();
        let k = int(line, tokens[0])?;
        if tokens.len() != 1 + 2 * k {
            return Err(Error::parse(path, line, format!("expected {k} source/score pairs")));
        }
        for pair in tokens[1..].chunks(2) {
            let j = int(line, pair[0])?;
            pair[1]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("bad score {:?}", pair[1])))?;
            if j >= n || j == i {
                return Err(Error::parse(path, line, format!("invalid source view {j}")));
            }
            out[i].push(j);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_zero_padded() {
        let l = ProjectLayout::new("/p");
        assert_eq!(l.image(3), Path::new("/p/images/00000003.ppm"));
        assert_eq!(l.cam(12), Path::new("/p/cams/00000012_cam.txt"));
        assert_eq!(l.confidence(0), Path::new("/p/depths/00000000_conf.pfm"));
    }

    #[test]
    fn pairs_round_trip() {
        let pairs = vec![vec![1, 2], vec![2, 0], vec![0]];
        let text = format_pairs(&pairs);
        assert_eq!(text, "3\n0\n2 1 2 2 1\n1\n2 2 2 0 1\n2\n1 0 1\n");
        assert_eq!(parse_pairs(&text, Path::new("pair.txt")).unwrap(), pairs);
        assert!(parse_pairs("2\n0\n1 0 1\n1\n0\n", Path::new("pair.txt")).is_err());
        assert!(parse_pairs("1\n0\n2 0 1\n", Path::new("pair.txt")).is_err());
    }
}
