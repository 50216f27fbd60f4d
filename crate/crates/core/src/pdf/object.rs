use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::io::Read;

#[derive(Debug, thiserror::Error)]
pub enum PdfError {
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("object {0} not found")]
    MissingObject(u32),
    #[error("no document catalog")]
    NoCatalog,
    #[error("page {0} not found")]
    NoSuchPage(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("stream decode failed: {0}")]
    Decode(String),
}

pub type Dict = BTreeMap<String, Object>;

#[derive(Clone, Debug, PartialEq)]
pub enum Object {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Name(String),
    Str(Vec<u8>),
    Array(Vec<Object>),
    Dict(Dict),
    Stream(Dict, Vec<u8>),
    Ref(u32, u16),
    /// Bare keyword; only produced when lexing content streams.
    Keyword(String),
}

impl Object {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Object::Int(i) => Some(i as f64),
            Object::Real(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Object::Int(i) => Some(i),
            Object::Real(r) => Some(r as i64),
            _ => None,
        }
    }

    pub fn as_name(&self) -> Option<&str> {
        match self {
            Object::Name(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_dict(&self) -> Option<&Dict> {
        match self {
            Object::Dict(d) | Object::Stream(d, _) => Some(d),
            _ => None,
        }
    }
}

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | b'\x0c' | b'\0')
}

fn is_delim(b: u8) -> bool {
    matches!(b, b'(' | b')' | b'<' | b'>' | b'[' | b']' | b'{' | b'}' | b'/' | b'%')
}

pub(crate) struct Lexer<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
    /// Recognise `N G R` indirect references (off inside content streams).
    pub refs: bool,
}

impl<'a> Lexer<'a> {
    pub fn new(bytes: &'a [u8], pos: usize, refs: bool) -> Self {
        Lexer { bytes, pos, refs }
    }

    fn err(&self, msg: impl Into<String>) -> PdfError {
        PdfError::Syntax {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    pub fn skip_ws(&mut self) {
        while let Some(b) = self.peek() {
            if is_ws(b) {
                self.pos += 1;
            } else if b == b'%' {
                while let Some(c) = self.peek() {
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.bytes.len()
    }

    fn regular_token(&mut self) -> &'a [u8] {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if is_ws(b) || is_delim(b) {
                break;
            }
            self.pos += 1;
        }
        &self.bytes[start..self.pos]
    }

    /// Next object, or a bare keyword. `None` at end of input or on a closing delimiter.
    pub fn next(&mut self) -> Result<Option<Object>, PdfError> {
        self.skip_ws();
        let Some(b) = self.peek() else { return Ok(None) };
        match b {
            b'/' => {
                self.pos += 1;
                let raw = self.regular_token();
                Ok(Some(Object::Name(decode_name(raw))))
            }
            b'(' => self.literal_string().map(Some),
            b'<' => {
                if self.bytes.get(self.pos + 1) == Some(&b'<') {
                    self.pos += 2;
                    self.dict_body().map(|d| Some(Object::Dict(d)))
                } else {
                    self.hex_string().map(Some)
                }
            }
            b'[' => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b']') => {
                            self.pos += 1;
                            break;
                        }
                        None => return Err(self.err("unterminated array")),
                        _ => match self.next()? {
                            Some(o) => items.push(o),
                            None => return Err(self.err("bad array element")),
                        },
                    }
                }
                Ok(Some(Object::Array(items)))
            }
            b']' | b'>' | b')' | b'}' => Ok(None),
            b'{' => {
                self.pos += 1;
                Ok(Some(Object::Keyword("{".into())))
            }
            _ => {
                let tok = self.regular_token();
                if tok.is_empty() {
                    return Err(self.err(format!("unexpected byte 0x{b:02x}")));
                }
                self.word(tok).map(Some)
            }
        }
    }

    fn word(&mut self, tok: &'a [u8]) -> Result<Object, PdfError> {
        let text = std::str::from_utf8(tok).map_err(|_| self.err("non-utf8 token"))?;
        if let Ok(i) = text.parse::<i64>() {
            if self.refs && i >= 0 {
                let save = self.pos;
                if let Some(r) = self.try_ref(i) {
                    return Ok(r);
                }
                self.pos = save;
            }
            return Ok(Object::Int(i));
        }
        if text.starts_with(|c: char| c.is_ascii_digit() || c == '-' || c == '+' || c == '.') {
            let cleaned = text.trim_start_matches('+');
            if let Ok(r) = cleaned.parse::<f64>() {
                return Ok(Object::Real(r));
            }
            // Malformed numbers such as "--5" appear in the wild; treat as zero.
            return Ok(Object::Real(0.0));
        }
        Ok(match text {
            "true" => Object::Bool(true),
            "false" => Object::Bool(false),
            "null" => Object::Null,
            _ => Object::Keyword(text.to_string()),
        })
    }

    fn try_ref(&mut self, num: i64) -> Option<Object> {
        self.skip_ws();
        let gen_tok = self.regular_token();
        let gen: u16 = std::str::from_utf8(gen_tok).ok()?.parse().ok()?;
        self.skip_ws();
        if self.peek() == Some(b'R') {
            let after = self.bytes.get(self.pos + 1).copied();
            if after.is_none_or(|c| is_ws(c) || is_delim(c)) {
                self.pos += 1;
                return Some(Object::Ref(num as u32, gen));
            }
        }
        None
    }

    fn dict_body(&mut self) -> Result<Dict, PdfError> {
        let mut dict = Dict::new();
        loop {
            self.skip_ws();
            if self.bytes[self.pos..].starts_with(b">>") {
                self.pos += 2;
                return Ok(dict);
            }
            let key = match self.next()? {
                Some(Object::Name(n)) => n,
                Some(other) => return Err(self.err(format!("dictionary key is not a name: {other:?}"))),
                None => return Err(self.err("unterminated dictionary")),
            };
            self.skip_ws();
            if self.bytes[self.pos..].starts_with(b">>") {
                dict.insert(key, Object::Null);
                continue;
            }
            let value = self.next()?.ok_or_else(|| self.err("missing dictionary value"))?;
            dict.insert(key, value);
        }
    }

    fn literal_string(&mut self) -> Result<Object, PdfError> {
        self.pos += 1;
        let mut out = Vec::new();
        let mut depth = 1;
        while let Some(b) = self.peek() {
            self.pos += 1;
            match b {
                b'(' => {
                    depth += 1;
                    out.push(b);
                }
                b')' => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(Object::Str(out));
                    }
                    out.push(b);
                }
                b'\\' => {
                    let Some(e) = self.peek() else { break };
                    self.pos += 1;
                    match e {
                        b'n' => out.push(b'\n'),
                        b'r' => out.push(b'\r'),
                        b't' => out.push(b'\t'),
                        b'b' => out.push(8),
                        b'f' => out.push(12),
                        b'\r' => {
                            if self.peek() == Some(b'\n') {
                                self.pos += 1;
                            }
                        }
                        b'\n' => {}
                        b'0'..=b'7' => {
                            let mut v = (e - b'0') as u32;
                            for _ in 0..2 {
                                match self.peek() {
                                    Some(d @ b'0'..=b'7') => {
                                        v = v * 8 + (d - b'0') as u32;
                                        self.pos += 1;
                                    }
                                    _ => break,
                                }
                            }
                            out.push(v as u8);
                        }
                        other => out.push(other),
                    }
                }
                _ => out.push(b),
            }
        }
        Err(self.err("unterminated string"))
    }

    fn hex_string(&mut self) -> Result<Object, PdfError> {
        self.pos += 1;
        let mut digits = Vec::new();
        while let Some(b) = self.peek() {
            self.pos += 1;
            if b == b'>' {
                if digits.len() % 2 == 1 {
                    digits.push(0);
                }
                return Ok(Object::Str(digits.chunks(2).map(|p| p[0] << 4 | p[1]).collect()));
            }
            if let Some(v) = (b as char).to_digit(16) {
                digits.push(v as u8);
            }
        }
        Err(self.err("unterminated hex string"))
    }
}

fn decode_name(raw: &[u8]) -> String {
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == b'#' && i + 2 < raw.len() {
            if let Ok(v) = u8::from_str_radix(std::str::from_utf8(&raw[i + 1..i + 3]).unwrap_or(""), 16) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(raw[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

#[derive(Clone, Copy, Debug)]
enum Location {
    Direct(usize),
    Compressed { stream: u32, index: usize },
}

/// A parsed page: media box in PDF user space, inherited resources, decoded content.
#[derive(Clone, Debug)]
pub(crate) struct Page {
    pub media_box: [f64; 4],
    pub resources: Dict,
    pub content: Vec<u8>,
}

/// An in-memory PDF file with lazily parsed objects.
pub struct Document {
    bytes: Vec<u8>,
    locations: HashMap<u32, Location>,
    cache: RefCell<HashMap<u32, Object>>,
    pages: Vec<Dict>,
}

impl Document {
    pub fn parse(bytes: &[u8]) -> Result<Self, PdfError> {
        let mut doc = Document {
            bytes: bytes.to_vec(),
            locations: HashMap::new(),
            cache: RefCell::new(HashMap::new()),
            pages: Vec::new(),
        };
        for (num, offset) in scan_objects(&doc.bytes) {
            doc.locations.insert(num, Location::Direct(offset));
        }
        if doc.locations.is_empty() {
            return Err(PdfError::Syntax {
                offset: 0,
                msg: "no objects found".into(),
            });
        }
        doc.register_object_streams();
        let root = doc.find_root()?;
        let pages_ref = doc
            .resolve(root.as_dict().and_then(|d| d.get("Pages")).ok_or(PdfError::NoCatalog)?)?;
        let mut pages = Vec::new();
        doc.collect_pages(&pages_ref, &Dict::new(), &mut pages, 0)?;
        doc.pages = pages;
        Ok(doc)
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    fn register_object_streams(&mut self) {
        let nums: Vec<u32> = self.locations.keys().copied().collect();
        let mut extra = Vec::new();
        for num in nums {
            let Ok(Object::Stream(dict, raw)) = self.object(num) else { continue };
            if dict.get("Type").and_then(Object::as_name) != Some("ObjStm") {
                continue;
            }
            let Ok(data) = self.decode_stream(&dict, &raw) else { continue };
            let n = dict.get("N").and_then(Object::as_i64).unwrap_or(0).max(0) as usize;
            let mut lx = Lexer::new(&data, 0, false);
            for index in 0..n {
                let (Ok(Some(Object::Int(obj))), Ok(Some(Object::Int(_)))) = (lx.next(), lx.next()) else {
                    break;
                };
                extra.push((obj as u32, num, index));
            }
        }
        for (obj, stream, index) in extra {
            self.locations.entry(obj).or_insert(Location::Compressed { stream, index });
        }
    }

    fn find_root(&self) -> Result<Object, PdfError> {
        // Classic trailer(s): the last one wins.
        let mut pos = self.bytes.len();
        while let Some(i) = rfind(&self.bytes[..pos], b"trailer") {
            let mut lx = Lexer::new(&self.bytes, i + 7, true);
            if let Ok(Some(Object::Dict(d))) = lx.next() {
                if let Some(root) = d.get("Root") {
                    return self.resolve(root);
                }
            }
            pos = i;
        }
        // Cross-reference streams or no trailer at all: look for the catalog.
        let mut nums: Vec<u32> = self.locations.keys().copied().collect();
        nums.sort_unstable();
        for &num in &nums {
            if let Ok(obj) = self.object(num) {
                let d = obj.as_dict();
                if d.and_then(|d| d.get("Type")).and_then(Object::as_name) == Some("XRef") {
                    if let Some(root) = d.and_then(|d| d.get("Root")) {
                        return self.resolve(root);
                    }
                }
            }
        }
        for &num in &nums {
            if let Ok(obj) = self.object(num) {
                if obj.as_dict().and_then(|d| d.get("Type")).and_then(Object::as_name) == Some("Catalog") {
                    return Ok(obj);
                }
            }
        }
        Err(PdfError::NoCatalog)
    }

    fn collect_pages(&self, node: &Object, inherited: &Dict, out: &mut Vec<Dict>, depth: usize) -> Result<(), PdfError> {
        if depth > 64 {
            return Err(PdfError::Unsupported("page tree too deep".into()));
        }
        let dict = node.as_dict().ok_or(PdfError::NoCatalog)?;
        let mut inh = inherited.clone();
        for key in ["MediaBox", "Resources", "CropBox"] {
            if let Some(v) = dict.get(key) {
                inh.insert(key.to_string(), v.clone());
            }
        }
        match dict.get("Kids") {
            Some(kids) if dict.get("Type").and_then(Object::as_name) != Some("Page") => {
                let kids = self.resolve(kids)?;
                let Object::Array(items) = kids else {
                    return Err(PdfError::Unsupported("Kids is not an array".into()));
                };
                for kid in &items {
                    let kid = self.resolve(kid)?;
                    self.collect_pages(&kid, &inh, out, depth + 1)?;
                }
            }
            _ => {
                let mut page = dict.clone();
                for (k, v) in inh {
                    page.entry(k).or_insert(v);
                }
                out.push(page);
            }
        }
        Ok(())
    }

    pub(crate) fn page(&self, index: usize) -> Result<Page, PdfError> {
        let dict = self.pages.get(index).ok_or(PdfError::NoSuchPage(index))?;
        let media_box = match dict.get("MediaBox").map(|o| self.resolve(o)).transpose()? {
            Some(Object::Array(v)) if v.len() == 4 => {
                let mut b = [0.0; 4];
                for (slot, o) in b.iter_mut().zip(&v) {
                    *slot = self.resolve(o)?.as_f64().unwrap_or(0.0);
                }
                [b[0].min(b[2]), b[1].min(b[3]), b[0].max(b[2]), b[1].max(b[3])]
            }
            _ => [0.0, 0.0, 612.0, 792.0],
        };
        let resources = match dict.get("Resources") {
            Some(r) => self.resolve(r)?.as_dict().cloned().unwrap_or_default(),
            None => Dict::new(),
        };
        let mut content = Vec::new();
        if let Some(c) = dict.get("Contents") {
            let streams = match self.resolve(c)? {
                Object::Array(items) => items,
                other => vec![other],
            };
            for s in &streams {
                if let Object::Stream(d, raw) = self.resolve(s)? {
                    content.extend(self.decode_stream(&d, &raw)?);
                    content.push(b'\n');
                }
            }
        }
        Ok(Page {
            media_box,
            resources,
            content,
        })
    }

    /// Follows references until a direct object is reached.
    pub fn resolve(&self, obj: &Object) -> Result<Object, PdfError> {
        let mut current = obj.clone();
        for _ in 0..32 {
            match current {
                Object::Ref(num, _) => current = self.object(num)?,
                other => return Ok(other),
            }
        }
        Err(PdfError::Unsupported("reference chain too long".into()))
    }

    pub fn object(&self, num: u32) -> Result<Object, PdfError> {
        if let Some(o) = self.cache.borrow().get(&num) {
            return Ok(o.clone());
        }
        let loc = *self.locations.get(&num).ok_or(PdfError::MissingObject(num))?;
        let obj = match loc {
            Location::Direct(offset) => self.parse_indirect(offset)?,
            Location::Compressed { stream, index } => self.parse_compressed(stream, index)?,
        };
        self.cache.borrow_mut().insert(num, obj.clone());
        Ok(obj)
    }

    fn parse_indirect(&self, offset: usize) -> Result<Object, PdfError> {
        let mut lx = Lexer::new(&self.bytes, offset, true);
        let obj = lx.next()?.unwrap_or(Object::Null);
        let Object::Dict(dict) = obj else { return Ok(obj) };
        lx.skip_ws();
        if !self.bytes[lx.pos..].starts_with(b"stream") {
            return Ok(Object::Dict(dict));
        }
        let mut start = lx.pos + 6;
        if self.bytes.get(start) == Some(&b'\r') {
            start += 1;
        }
        if self.bytes.get(start) == Some(&b'\n') {
            start += 1;
        }
        let declared = match dict.get("Length") {
            Some(Object::Int(n)) => Some(*n as usize),
            Some(r @ Object::Ref(..)) => self.resolve(r).ok().and_then(|o| o.as_i64()).map(|n| n as usize),
            _ => None,
        };
        let valid = declared.filter(|&len| {
            let end = start + len;
            end <= self.bytes.len() && {
                let mut tail = Lexer::new(&self.bytes, end, false);
                tail.skip_ws();
                self.bytes[tail.pos..].starts_with(b"endstream")
            }
        });
        let end = match valid {
            Some(len) => start + len,
            None => {
                let rel = find(&self.bytes[start..], b"endstream").ok_or(PdfError::Syntax {
                    offset: start,
                    msg: "unterminated stream".into(),
                })?;
                let mut end = start + rel;
                while end > start && matches!(self.bytes[end - 1], b'\n' | b'\r') {
                    end -= 1;
                }
                end
            }
        };
        Ok(Object::Stream(dict, self.bytes[start..end].to_vec()))
    }

    fn parse_compressed(&self, stream: u32, index: usize) -> Result<Object, PdfError> {
        let Object::Stream(dict, raw) = self.object(stream)? else {
            return Err(PdfError::MissingObject(stream));
        };
        let data = self.decode_stream(&dict, &raw)?;
        let first = dict.get("First").and_then(Object::as_i64).unwrap_or(0) as usize;
        let mut lx = Lexer::new(&data, 0, false);
        let mut offset = None;
        for i in 0..=index {
            let _num = lx.next()?;
            let off = lx.next()?.and_then(|o| o.as_i64());
            if i == index {
                offset = off;
            }
        }
        let offset = offset.ok_or(PdfError::MissingObject(stream))? as usize;
        let mut obj_lx = Lexer::new(&data, first + offset, true);
        Ok(obj_lx.next()?.unwrap_or(Object::Null))
    }

    /// Applies the stream's filters. DCT-encoded data is returned untouched.
    pub fn decode_stream(&self, dict: &Dict, raw: &[u8]) -> Result<Vec<u8>, PdfError> {
        let filters = match dict.get("Filter").map(|f| self.resolve(f)).transpose()? {
            None => Vec::new(),
            Some(Object::Name(n)) => vec![n],
            Some(Object::Array(items)) => items.iter().filter_map(|o| o.as_name().map(String::from)).collect(),
            Some(other) => return Err(PdfError::Unsupported(format!("filter {other:?}"))),
        };
        let params: Vec<Option<Dict>> = match dict.get("DecodeParms").map(|p| self.resolve(p)).transpose()? {
            Some(Object::Dict(d)) => vec![Some(d)],
            Some(Object::Array(items)) => items
                .iter()
                .map(|o| self.resolve(o).ok().and_then(|o| o.as_dict().cloned()))
                .collect(),
            _ => Vec::new(),
        };
        let mut data = raw.to_vec();
        for (i, filter) in filters.iter().enumerate() {
            data = match filter.as_str() {
                "FlateDecode" | "Fl" => {
                    let mut out = Vec::new();
                    let mut z = flate2::read::ZlibDecoder::new(&data[..]);
                    if let Err(e) = z.read_to_end(&mut out) {
                        if out.is_empty() {
                            return Err(PdfError::Decode(e.to_string()));
                        }
                    }
                    match params.get(i).cloned().flatten() {
                        Some(p) => png_predictor(&out, &p)?,
                        None => out,
                    }
                }
                "ASCIIHexDecode" | "AHx" => {
                    let wrapped = [b"<".as_slice(), &data, b">"].concat();
                    let mut lx = Lexer::new(&wrapped, 0, false);
                    match lx.hex_string()? {
                        Object::Str(s) => s,
                        _ => unreachable!(),
                    }
                }
                "ASCII85Decode" | "A85" => ascii85(&data)?,
                "DCTDecode" | "DCT" => return Ok(data),
                other => return Err(PdfError::Unsupported(format!("filter {other}"))),
            };
        }
        Ok(data)
    }
}

fn png_predictor(data: &[u8], params: &Dict) -> Result<Vec<u8>, PdfError> {
    let predictor = params.get("Predictor").and_then(Object::as_i64).unwrap_or(1);
    if predictor < 10 {
        if predictor == 1 {
            return Ok(data.to_vec());
        }
        return Err(PdfError::Unsupported(format!("predictor {predictor}")));
    }
    let colors = params.get("Colors").and_then(Object::as_i64).unwrap_or(1) as usize;
    let bpc = params.get("BitsPerComponent").and_then(Object::as_i64).unwrap_or(8) as usize;
    let columns = params.get("Columns").and_then(Object::as_i64).unwrap_or(1) as usize;
    let bpp = (colors * bpc).div_ceil(8).max(1);
    let row_len = (colors * bpc * columns).div_ceil(8);
    let mut out = Vec::with_capacity(data.len());
    let mut prev = vec![0u8; row_len];
    for chunk in data.chunks(row_len + 1) {
        if chunk.len() < row_len + 1 {
            break;
        }
        let kind = chunk[0];
        let mut row = chunk[1..].to_vec();
        for i in 0..row_len {
            let left = if i >= bpp { row[i - bpp] } else { 0 };
            let up = prev[i];
            let up_left = if i >= bpp { prev[i - bpp] } else { 0 };
            row[i] = match kind {
                0 => row[i],
                1 => row[i].wrapping_add(left),
                2 => row[i].wrapping_add(up),
                3 => row[i].wrapping_add(((left as u16 + up as u16) / 2) as u8),
                4 => row[i].wrapping_add(paeth(left, up, up_left)),
                other => return Err(PdfError::Decode(format!("png filter type {other}"))),
            };
        }
        out.extend_from_slice(&row);
        prev = row;
    }
    Ok(out)
}

fn paeth(a: u8, b: u8, c: u8) -> u8 {
    let p = a as i16 + b as i16 - c as i16;
    let (pa, pb, pc) = ((p - a as i16).abs(), (p - b as i16).abs(), (p - c as i16).abs());
    if pa <= pb && pa <= pc {
        a
    } else if pb <= pc {
        b
    } else {
        c
    }
}

fn ascii85(data: &[u8]) -> Result<Vec<u8>, PdfError> {
    let mut out = Vec::new();
    let mut group = Vec::with_capacity(5);
    for &b in data {
        match b {
            b'~' => break,
            b'z' if group.is_empty() => out.extend_from_slice(&[0; 4]),
            b'!'..=b'u' => {
                group.push(b - b'!');
                if group.len() == 5 {
                    let v = group.iter().fold(0u64, |acc, &d| acc * 85 + d as u64);
                    out.extend_from_slice(&(v as u32).to_be_bytes());
                    group.clear();
                }
            }
            _ if is_ws(b) => {}
            other => return Err(PdfError::Decode(format!("bad ascii85 byte {other}"))),
        }
    }
    if !group.is_empty() {
        let n = group.len();
        while group.len() < 5 {
            group.push(84);
        }
        let v = group.iter().fold(0u64, |acc, &d| acc * 85 + d as u64);
        out.extend_from_slice(&(v as u32).to_be_bytes()[..n - 1]);
    }
    Ok(out)
}

fn find(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

fn rfind(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).rposition(|w| w == needle)
}

/// Finds `N G obj` headers; returns object numbers with the offset just past `obj`.
fn scan_objects(bytes: &[u8]) -> Vec<(u32, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(rel) = find(&bytes[i..], b"obj") {
        let at = i + rel;
        i = at + 3;
        if bytes.get(at + 3).is_some_and(|&c| !is_ws(c) && !is_delim(c)) {
            continue;
        }
        let mut j = at;
        let digits_back = |j: &mut usize| {
            let end = *j;
            while *j > 0 && bytes[*j - 1].is_ascii_digit() {
                *j -= 1;
            }
            (*j < end).then(|| std::str::from_utf8(&bytes[*j..end]).ok()).flatten()
        };
        let ws_back = |j: &mut usize| {
            let end = *j;
            while *j > 0 && is_ws(bytes[*j - 1]) {
                *j -= 1;
            }
            *j < end
        };
        if !ws_back(&mut j) || digits_back(&mut j).is_none() || !ws_back(&mut j) {
            continue;
        }
        let Some(num) = digits_back(&mut j).and_then(|s| s.parse::<u32>().ok()) else { continue };
        if j > 0 && !is_ws(bytes[j - 1]) && !is_delim(bytes[j - 1]) {
            continue;
        }
        out.push((num, at + 3));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex_all(src: &[u8]) -> Vec<Object> {
        let mut lx = Lexer::new(src, 0, true);
        let mut out = Vec::new();
        while let Some(o) = lx.next().unwrap() {
            out.push(o);
        }
        out
    }

    #[test]
    fn lexes_basic_objects() {
        let objs = lex_all(b"<< /A 1 /B [2.5 (x\\)y) <414243>] /C 3 0 R /D#20E true >> % c\n null");
        let Object::Dict(d) = &objs[0] else { panic!() };
        assert_eq!(d["A"], Object::Int(1));
        assert_eq!(
            d["B"],
            Object::Array(vec![Object::Real(2.5), Object::Str(b"x)y".to_vec()), Object::Str(b"ABC".to_vec())])
        );
        assert_eq!(d["C"], Object::Ref(3, 0));
        assert_eq!(d["D E"], Object::Bool(true));
        assert_eq!(objs[1], Object::Null);
    }

    #[test]
    fn ascii85_known_vector() {
        assert_eq!(ascii85(b"87cURD]i,\"Ebo7~>").unwrap(), b"Hello World");
    }

    #[test]
    fn png_up_predictor() {
        let mut p = Dict::new();
        p.insert("Predictor".into(), Object::Int(12));
        p.insert("Columns".into(), Object::Int(2));
        let data = [2, 1, 2, 2, 1, 1];
        assert_eq!(png_predictor(&data, &p).unwrap(), vec![1, 2, 2, 3]);
    }

    #[test]
    fn scans_object_headers() {
        let src = b"%PDF-1.4\n1 0 obj\n<<>>\nendobj\n12 0 obj 5 endobj\nfoo 3 0 objx";
        let found = scan_objects(src);
        assert_eq!(found.iter().map(|f| f.0).collect::<Vec<_>>(), vec![1, 12]);
    }
}
