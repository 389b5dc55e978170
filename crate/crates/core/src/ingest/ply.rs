//! Minimal PLY reader for `ascii 1.0` and `binary_little_endian 1.0`.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List { name: String, count: ScalarType, item: ScalarType },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct ElementDef {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// One decoded element: per-record property values; lists are flattened.
#[derive(Debug, Clone)]
pub(crate) struct Element {
    pub name: String,
    pub property_names: Vec<String>,
    /// `records[r][p]` holds the values of property `p` (length 1 for scalars).
    pub records: Vec<Vec<Vec<f64>>>,
}

impl Element {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.property_names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PlyFile {
    pub elements: Vec<Element>,
}

impl PlyFile {
    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

pub(crate) fn read(path: &Path, bytes: &[u8]) -> Result<PlyFile> {
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let next_line = |pos: &mut usize| -> Option<String> {
        if *pos >= bytes.len() {
            return None;
        }
        let end = bytes[*pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| *pos + i);
        let line = String::from_utf8_lossy(&bytes[*pos..end]).trim_end_matches('\r').to_string();
        *pos = (end + 1).min(bytes.len());
        Some(line)
    };

    line_no += 1;
    if next_line(&mut pos).as_deref().map(str::trim) != Some("ply") {
        return Err(parse_err(path, 1, "missing 'ply' magic line"));
    }
    let mut encoding = None;
    let mut defs: Vec<ElementDef> = Vec::new();
    loop {
        line_no += 1;
        let line = next_line(&mut pos).ok_or_else(|| parse_err(path, line_no, "unterminated header"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(parse_err(path, line_no, format!("unsupported PLY version {version}")));
                }
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLittleEndian,
                    other => return Err(parse_err(path, line_no, format!("unsupported PLY format {other}"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad element count '{count}'")))?;
                defs.push(ElementDef { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", count, item, name] => {
                let el = defs.last_mut().ok_or_else(|| parse_err(path, line_no, "property before element"))?;
                let count = ScalarType::parse(count)
                    .ok_or_else(|| parse_err(path, line_no, format!("unknown type '{count}'")))?;
                let item = ScalarType::parse(item)
                    .ok_or_else(|| parse_err(path, line_no, format!("unknown type '{item}'")))?;
                el.properties.push(Property::List { name: name.to_string(), count, item });
            }
            ["property", ty, name] => {
                let el = defs.last_mut().ok_or_else(|| parse_err(path, line_no, "property before element"))?;
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| parse_err(path, line_no, format!("unknown type '{ty}'")))?;
                el.properties.push(Property::Scalar { name: name.to_string(), ty });
            }
            ["end_header"] => break,
            _ => return Err(parse_err(path, line_no, format!("unrecognized header line '{line}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(path, line_no, "missing format line"))?;

    let mut elements = Vec::with_capacity(defs.len());
    match encoding {
        Encoding::Ascii => {
            for def in &defs {
                let mut records = Vec::with_capacity(def.count);
                for _ in 0..def.count {
                    line_no += 1;
                    let line = next_line(&mut pos).ok_or_else(|| {
                        parse_err(path, line_no, format!("unexpected end of file in element '{}'", def.name))
                    })?;
                    let mut values = line.split_whitespace().map(|t| {
                        t.parse::<f64>().map_err(|_| parse_err(path, line_no, format!("bad number '{t}'")))
                    });
                    let mut next = || {
                        values.next().unwrap_or_else(|| Err(parse_err(path, line_no, "too few values")))
                    };
                    let mut record = Vec::with_capacity(def.properties.len());
                    for prop in &def.properties {
                        match prop {
                            Property::Scalar { .. } => record.push(vec![next()?]),
                            Property::List { .. } => {
                                let n = next()?;
                                if n < 0.0 || n.fract() != 0.0 {
                                    return Err(parse_err(path, line_no, format!("bad list length {n}")));
                                }
                                record.push((0..n as usize).map(|_| next()).collect::<Result<_>>()?);
                            }
                        }
                    }
                    records.push(record);
                }
                elements.push(finish(def, records));
            }
        }
        Encoding::BinaryLittleEndian => {
            let data = &bytes[pos..];
            let mut off = 0usize;
            let mut take = |n: usize, el: &str| -> Result<&[u8]> {
                if off + n > data.len() {
                    return Err(parse_err(path, line_no, format!("truncated binary data in element '{el}'")));
                }
                let s = &data[off..off + n];
                off += n;
                Ok(s)
            };
            for def in &defs {
                let mut records = Vec::with_capacity(def.count);
                for _ in 0..def.count {
                    let mut record = Vec::with_capacity(def.properties.len());
                    for prop in &def.properties {
                        match *prop {
                            Property::Scalar { ty, .. } => record.push(vec![ty.read_le(take(ty.size(), &def.name)?)]),
                            Property::List { count, item, .. } => {
                                let n = count.read_le(take(count.size(), &def.name)?);
                                if n < 0.0 {
                                    return Err(parse_err(path, line_no, "negative list length"));
                                }
                                let mut vals = Vec::with_capacity(n as usize);
                                for _ in 0..n as usize {
                                    vals.push(item.read_le(take(item.size(), &def.name)?));
                                }
                                record.push(vals);
                            }
                        }
                    }
                    records.push(record);
                }
                elements.push(finish(def, records));
            }
        }
    }
    Ok(PlyFile { elements })
}

fn finish(def: &ElementDef, records: Vec<Vec<Vec<f64>>>) -> Element {
    Element {
        name: def.name.clone(),
        property_names: def.properties.iter().map(|p| p.name().to_string()).collect(),
        records,
    }
}
