//! Reader and writer for the PLY layout used by trained Gaussian-splatting scenes.
//!
//! Vertex properties: `x y z`, `f_dc_0..2`, optional `f_rest_*` (channel-major),
//! `opacity` (stored as a logit), `scale_0..2` (stored as natural logs) and
//! `rot_0..3` (quaternion, `w` first). Other properties are ignored on read.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Quaternion;

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian, GaussianCloud, Vec3};
use crate::sh::{coeff_count, ShCoeffs, MAX_DEGREE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    BinaryLittleEndian,
    Ascii,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read<R: Read>(self, r: &mut R) -> std::io::Result<f64> {
        Ok(match self {
            ScalarType::I8 => r.read_i8()? as f64,
            ScalarType::U8 => r.read_u8()? as f64,
            ScalarType::I16 => r.read_i16::<LittleEndian>()? as f64,
            ScalarType::U16 => r.read_u16::<LittleEndian>()? as f64,
            ScalarType::I32 => r.read_i32::<LittleEndian>()? as f64,
            ScalarType::U32 => r.read_u32::<LittleEndian>()? as f64,
            ScalarType::F32 => r.read_f32::<LittleEndian>()? as f64,
            ScalarType::F64 => r.read_f64::<LittleEndian>()?,
        })
    }
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, ScalarType)>,
    has_list: bool,
}

#[derive(Debug)]
struct Header {
    format: Format,
    elements: Vec<Element>,
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header> {
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Header("unexpected end of file in header".into()));
        }
        Ok(line.trim_end_matches(['\r', '\n']).to_string())
    };

    if next_line(r)? != "ply" {
        return Err(Error::Header("missing `ply` magic".into()));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let l = next_line(r)?;
        let mut tok = l.split_whitespace();
        match tok.next() {
            Some("format") => {
                format = Some(match tok.next() {
                    Some("binary_little_endian") => Format::BinaryLittleEndian,
                    Some("ascii") => Format::Ascii,
                    other => {
                        return Err(Error::Header(format!("unsupported format {other:?}")));
                    }
                });
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| Error::Header(l.clone()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Header(format!("bad element line `{l}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Header("property before element".into()))?;
                let ty = tok.next().ok_or_else(|| Error::Header(l.clone()))?;
                if ty == "list" {
                    el.has_list = true;
                    continue;
                }
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| Error::Header(format!("unknown property type `{ty}`")))?;
                let name = tok.next().ok_or_else(|| Error::Header(l.clone()))?;
                el.properties.push((name.to_string(), ty));
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::Header(format!("unexpected keyword `{other}`"))),
        }
    }
    Ok(Header {
        format: format.ok_or_else(|| Error::Header("missing format line".into()))?,
        elements,
    })
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut cloud = read_ply(&mut BufReader::new(file))?;
    cloud.source = path.display().to_string();
    Ok(cloud)
}

pub fn read_ply<R: BufRead>(r: &mut R) -> Result<GaussianCloud> {
    let header = read_header(r)?;
    let mut skip = 0usize;
    let mut vertex = None;
    for el in &header.elements {
        if el.name == "vertex" {
            vertex = Some(el);
            break;
        }
        if el.has_list {
            return Err(Error::Header(format!(
                "list element `{}` precedes vertex data",
                el.name
            )));
        }
        skip += el.count * el.properties.iter().map(|p| p.1.size()).sum::<usize>();
    }
    let vertex = vertex.ok_or_else(|| Error::Schema("vertex".into()))?;
    if vertex.has_list {
        return Err(Error::Header("list properties on vertex element".into()));
    }
    if header.format == Format::BinaryLittleEndian && skip > 0 {
        std::io::copy(&mut r.by_ref().take(skip as u64), &mut std::io::sink())?;
    }

    let column: HashMap<&str, usize> = vertex
        .properties
        .iter()
        .enumerate()
        .map(|(i, (n, _))| (n.as_str(), i))
        .collect();
    let require = |name: &str| -> Result<usize> {
        column
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(name.to_string()))
    };
    let pos = [require("x")?, require("y")?, require("z")?];
    let dc = [require("f_dc_0")?, require("f_dc_1")?, require("f_dc_2")?];
    let opacity = require("opacity")?;
    let scale = [
        require("scale_0")?,
        require("scale_1")?,
        require("scale_2")?,
    ];
    let rot = [
        require("rot_0")?,
        require("rot_1")?,
        require("rot_2")?,
        require("rot_3")?,
    ];
    let rest_count = (0..)
        .take_while(|k| column.contains_key(format!("f_rest_{k}").as_str()))
        .count();
    let degree = (0..=MAX_DEGREE)
        .find(|&d| 3 * (coeff_count(d) - 1) == rest_count)
        .ok_or_else(|| {
            Error::Schema(format!(
                "f_rest_{rest_count} (inconsistent SH coefficient count)"
            ))
        })?;
    let rest: Vec<usize> = (0..rest_count)
        .map(|k| require(&format!("f_rest_{k}")))
        .collect::<Result<_>>()?;
    let per_channel = coeff_count(degree) - 1;

    if header.format == Format::Ascii {
        // Skip lines of any elements preceding the vertex block.
        let mut line = String::new();
        for el in header.elements.iter().take_while(|e| e.name != "vertex") {
            for _ in 0..el.count {
                line.clear();
                r.read_line(&mut line)?;
            }
        }
    }

    let mut row = vec![0.0f64; vertex.properties.len()];
    let mut line = String::new();
    let mut gaussians = Vec::with_capacity(vertex.count);
    for index in 0..vertex.count {
        match header.format {
            Format::BinaryLittleEndian => {
                for (slot, (_, ty)) in row.iter_mut().zip(&vertex.properties) {
                    *slot = ty.read(r).map_err(|e| Error::Data {
                        index,
                        message: format!("truncated vertex data: {e}"),
                    })?;
                }
            }
            Format::Ascii => {
                line.clear();
                r.read_line(&mut line)?;
                let mut it = line.split_whitespace();
                for slot in row.iter_mut() {
                    *slot = it
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::Data {
                            index,
                            message: "missing or unparsable value".into(),
                        })?;
                }
            }
        }
        if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data {
                index,
                message: format!(
                    "non-finite value in property `{}`",
                    vertex.properties[bad].0
                ),
            });
        }

        let mut coeffs = vec![[0.0; 3]; coeff_count(degree)];
        coeffs[0] = [row[dc[0]], row[dc[1]], row[dc[2]]];
        for k in 0..per_channel {
            for ch in 0..3 {
                coeffs[k + 1][ch] = row[rest[ch * per_channel + k]];
            }
        }
        let q = Quaternion::new(row[rot[0]], row[rot[1]], row[rot[2]], row[rot[3]]);
        let g = Gaussian::new(
            Vec3::new(row[pos[0]], row[pos[1]], row[pos[2]]),
            Vec3::new(
                row[scale[0]].exp(),
                row[scale[1]].exp(),
                row[scale[2]].exp(),
            ),
            q,
            sigmoid(row[opacity]),
            ShCoeffs::from_coeffs(coeffs).expect("coefficient count matches degree"),
        )
        .map_err(|e| Error::Data {
            index,
            message: e.to_string(),
        })?;
        gaussians.push(g);
    }
    Ok(GaussianCloud::new(gaussians, "stream"))
}

pub fn save_ply(cloud: &GaussianCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply(cloud, &mut w).map_err(|e| match e {
        Error::Stream(io) => Error::io(path, io),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Serializes `cloud` as binary little-endian PLY. Lineage is not written.
pub fn write_ply<W: Write>(cloud: &GaussianCloud, w: &mut W) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let degree = cloud.sh_degree();
    let per_channel = coeff_count(degree) - 1;

    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    let mut names: Vec<String> = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend((0..3 * per_channel).map(|k| format!("f_rest_{k}")));
    names.push("opacity".into());
    names.extend((0..3).map(|k| format!("scale_{k}")));
    names.extend((0..4).map(|k| format!("rot_{k}")));
    for n in &names {
        header.push_str(&format!("property float {n}\n"));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;

    for g in cloud.iter() {
        let sh = g.sh.with_degree(degree);
        let c = sh.coeffs();
        let mut vals: Vec<f64> = Vec::with_capacity(names.len());
        vals.extend(g.position.iter());
        vals.extend(c[0]);
        for ch in 0..3 {
            vals.extend((0..per_channel).map(|k| c[k + 1][ch]));
        }
        vals.push(logit(g.opacity));
        vals.extend(g.scale.iter().map(|s| s.ln()));
        let q = g.rotation.quaternion();
        vals.extend([q.w, q.i, q.j, q.k]);
        for v in vals {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}
