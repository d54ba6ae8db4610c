//! Slide rasters, tiling and raster file I/O (PNG and binary PPM).

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Smallest tile side accepted by [`make_grid`].
pub const MIN_TILE_SIZE: u32 = 8;

#[derive(Debug, Error)]
pub enum SlideIoError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}: unsupported raster format (expected PNG or binary PPM)")]
    UnsupportedFormat(PathBuf),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("corrupt payload: expected {expected} bytes, found {found}")]
    CorruptPayload { expected: usize, found: usize },
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("tile size {tile} out of range (minimum {MIN_TILE_SIZE})")]
    TileSize { tile: u32 },
    #[error("stride {stride} out of range 1..={tile}")]
    Stride { stride: u32, tile: u32 },
    #[error("tile ({row}, {col}) outside {rows}x{cols} grid")]
    TileIndex {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
}

pub type Result<T, E = SlideIoError> = std::result::Result<T, E>;

/// An 8-bit RGB raster, row-major, three samples per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlideImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl SlideImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SlideIoError::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(SlideIoError::InvalidRaster(format!(
                "{width}x{height} RGB needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// A raster filled with one color.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        let n = width as usize * height as usize;
        let data = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// Regular grid of square tiles over a slide.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileGrid {
    pub tile_size: u32,
    pub stride: u32,
    pub rows: usize,
    pub cols: usize,
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel coordinates `(x, y)` of the top-left corner of a tile.
    pub fn origin(&self, row: usize, col: usize) -> (u32, u32) {
        (col as u32 * self.stride, row as u32 * self.stride)
    }

    /// Tile indices in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| (r, c)))
    }

    /// Width and height of the area spanned by all tiles, padding included.
    pub fn extent(&self) -> (u32, u32) {
        (
            (self.cols as u32 - 1) * self.stride + self.tile_size,
            (self.rows as u32 - 1) * self.stride + self.tile_size,
        )
    }
}

/// One square tile cut out of a slide.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Patch {
    pub tile_index: (usize, usize),
    size: u32,
    pixels: Vec<u8>,
}

impl Patch {
    pub fn new(tile_index: (usize, usize), size: u32, pixels: Vec<u8>) -> Result<Self> {
        let expected = size as usize * size as usize * 3;
        if size == 0 || pixels.len() != expected {
            return Err(SlideIoError::InvalidRaster(format!(
                "patch of side {size} needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self {
            tile_index,
            size,
            pixels,
        })
    }

    /// Square patch from a square image.
    pub fn from_image(image: &SlideImage) -> Result<Self> {
        if image.width() != image.height() {
            return Err(SlideIoError::InvalidRaster(format!(
                "patch images must be square, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Self::new((0, 0), image.width(), image.data().to_vec())
    }

    pub fn size(&self) -> u32 {
        self.size
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.size as usize + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_image(&self) -> SlideImage {
        SlideImage {
            width: self.size,
            height: self.size,
            data: self.pixels.clone(),
        }
    }

    /// Bilinear resample to `side × side`; returns a clone when already that size.
    pub fn resized(&self, side: u32) -> Patch {
        if side == self.size {
            return self.clone();
        }
        let src = self.size as usize;
        let dst = side as usize;
        let scale = src as f32 / dst as f32;
        let mut out = Vec::with_capacity(dst * dst * 3);
        for y in 0..dst {
            let fy = ((y as f32 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(src - 1);
            let wy = fy - y0 as f32;
            for x in 0..dst {
                let fx = ((x as f32 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(src - 1);
                let wx = fx - x0 as f32;
                let (a, b, c, d) = (
                    self.pixel(x0, y0),
                    self.pixel(x1, y0),
                    self.pixel(x0, y1),
                    self.pixel(x1, y1),
                );
                for ch in 0..3 {
                    let top = a[ch] as f32 * (1.0 - wx) + b[ch] as f32 * wx;
                    let bottom = c[ch] as f32 * (1.0 - wx) + d[ch] as f32 * wx;
                    let v = top * (1.0 - wy) + bottom * wy;
                    out.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
        Patch {
            tile_index: self.tile_index,
            size: side,
            pixels: out,
        }
    }
}

/// Tile a slide so every pixel falls inside at least one tile.
///
/// `rows = ceil(max(height - tile, 0) / stride) + 1`, columns likewise.
pub fn make_grid(slide: &SlideImage, tile_size: u32, stride: u32) -> Result<TileGrid> {
    if tile_size < MIN_TILE_SIZE {
        return Err(SlideIoError::TileSize { tile: tile_size });
    }
    if stride == 0 || stride > tile_size {
        return Err(SlideIoError::Stride {
            stride,
            tile: tile_size,
        });
    }
    let count = |extent: u32| -> usize {
        let rest = extent.saturating_sub(tile_size);
        rest.div_ceil(stride) as usize + 1
    };
    Ok(TileGrid {
        tile_size,
        stride,
        rows: count(slide.height()),
        cols: count(slide.width()),
    })
}

/// Half-sample symmetric reflection: `... b a | a b c | c b ...`.
#[inline]
pub(crate) fn reflect(index: u32, len: u32) -> u32 {
    let period = 2 * len;
    let m = index % period;
    if m < len {
        m
    } else {
        period - 1 - m
    }
}

/// Cut tile `(row, col)` out of the slide, reflecting about the border
/// where the tile extends past it.
pub fn extract_patch(slide: &SlideImage, grid: &TileGrid, row: usize, col: usize) -> Result<Patch> {
    if row >= grid.rows || col >= grid.cols {
        return Err(SlideIoError::TileIndex {
            row,
            col,
            rows: grid.rows,
            cols: grid.cols,
        });
    }
    let (x0, y0) = grid.origin(row, col);
    let side = grid.tile_size;
    let mut pixels = Vec::with_capacity(side as usize * side as usize * 3);
    let xs: Vec<usize> = (0..side)
        .map(|dx| reflect(x0 + dx, slide.width()) as usize * 3)
        .collect();
    let row_bytes = slide.width() as usize * 3;
    for dy in 0..side {
        let sy = reflect(y0 + dy, slide.height()) as usize;
        let line = &slide.data[sy * row_bytes..(sy + 1) * row_bytes];
        for &sx in &xs {
            pixels.extend_from_slice(&line[sx..sx + 3]);
        }
    }
    Ok(Patch {
        tile_index: (row, col),
        size: side,
        pixels,
    })
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SlideIoError + '_ {
    move |source| SlideIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Decode a PNG or binary PPM (P6) file. Grayscale input is expanded to RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<SlideImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    decode_image(&bytes).map_err(|e| match e {
        SlideIoError::UnsupportedFormat(_) => SlideIoError::UnsupportedFormat(path.to_path_buf()),
        other => other,
    })
}

/// Decode raster bytes, sniffing the format from the magic number.
pub fn decode_image(bytes: &[u8]) -> Result<SlideImage> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else {
        Err(SlideIoError::UnsupportedFormat(PathBuf::new()))
    }
}

/// Write a raster; `.ppm` paths get binary PPM, everything else PNG.
pub fn write_image(image: &SlideImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let is_ppm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    if is_ppm {
        encode_ppm(image, &mut out).map_err(io_err(path))?;
    } else {
        out.write_all(&encode_png(image)?).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn encode_ppm(image: &SlideImage, out: &mut impl Write) -> io::Result<()> {
    write!(out, "P6\n{} {}\n255\n", image.width, image.height)?;
    out.write_all(&image.data)
}

pub fn encode_png(image: &SlideImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut buf, image.width, image.height);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| SlideIoError::InvalidRaster(e.to_string()))?;
        writer
            .write_image_data(&image.data)
            .map_err(|e| SlideIoError::InvalidRaster(e.to_string()))?;
    }
    Ok(buf)
}

fn decode_png(bytes: &[u8]) -> Result<SlideImage> {
    let mut decoder = png::Decoder::new(io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| SlideIoError::CorruptHeader(e.to_string()))?;
    let mut buf = vec![
        0;
        reader
            .output_buffer_size()
            .ok_or_else(|| SlideIoError::CorruptHeader("PNG too large".into()))?
    ];
    let info = reader.next_frame(&mut buf).map_err(|e| match e {
        png::DecodingError::Format(_) | png::DecodingError::IoError(_) => {
            SlideIoError::CorruptPayload {
                expected: bytes.len(),
                found: 0,
            }
        }
        other => SlideIoError::CorruptHeader(other.to_string()),
    })?;
    let buf = &buf[..info.buffer_size()];
    let samples = match info.color_type {
        png::ColorType::Rgb => buf.to_vec(),
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => buf
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        png::ColorType::Indexed => {
            return Err(SlideIoError::CorruptHeader(
                "indexed PNG was not expanded".into(),
            ))
        }
    };
    SlideImage::new(info.width, info.height, samples)
}

fn decode_ppm(bytes: &[u8]) -> Result<SlideImage> {
    // Header: "P6" <ws> width <ws> height <ws> maxval <single ws> payload.
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(SlideIoError::CorruptHeader(
                "expected a decimal number in PPM header".into(),
            ));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| SlideIoError::CorruptHeader("PPM header number overflows".into()))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(SlideIoError::CorruptHeader(format!(
            "PPM maxval must be 255, got {maxval}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(SlideIoError::CorruptHeader(format!(
            "PPM dimensions must be positive, got {width}x{height}"
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(SlideIoError::CorruptHeader(
            "missing whitespace after PPM maxval".into(),
        ));
    }
    pos += 1;
    let expected = width as usize * height as usize * 3;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(SlideIoError::CorruptPayload {
            expected,
            found: payload.len(),
        });
    }
    SlideImage::new(width, height, payload[..expected].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ppm(width: u32, height: u32, payload: &[u8]) -> Vec<u8> {
        let mut v = format!("P6\n{width} {height}\n255\n").into_bytes();
        v.extend_from_slice(payload);
        v
    }

    #[test]
    fn ppm_all_white() {
        let img = decode_image(&ppm(4, 4, &[255; 48])).unwrap();
        assert_eq!((img.width(), img.height()), (4, 4));
        assert!(img.data().iter().all(|&b| b == 255));
    }

    #[test]
    fn ppm_truncated_payload() {
        match decode_image(&ppm(4, 4, &[0; 10])) {
            Err(SlideIoError::CorruptPayload { expected, found }) => {
                assert_eq!((expected, found), (48, 10));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ppm_bad_header() {
        assert!(matches!(
            decode_image(b"P6\nfour 4\n255\n"),
            Err(SlideIoError::CorruptHeader(_))
        ));
        assert!(matches!(
            decode_image(b"P6 4 4 65535\n"),
            Err(SlideIoError::CorruptHeader(_))
        ));
        assert!(matches!(
            decode_image(b"P3 1 1 255\n0 0 0"),
            Err(SlideIoError::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn ppm_header_comment() {
        let img = decode_image(b"P6\n# made by hand\n1 1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(img.data(), &[1, 2, 3]);
    }

    #[test]
    fn png_single_pixel() {
        let img = SlideImage::new(1, 1, vec![10, 20, 30]).unwrap();
        let bytes = encode_png(&img).unwrap();
        assert_eq!(decode_image(&bytes).unwrap(), img);
    }

    #[test]
    fn png_grayscale_expands() {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, 2, 1);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            enc.write_header().unwrap().write_image_data(&[7, 200]).unwrap();
        }
        let img = decode_image(&buf).unwrap();
        assert_eq!(img.data(), &[7, 7, 7, 200, 200, 200]);
    }

    #[test]
    fn png_truncated_is_error() {
        let img = SlideImage::filled(16, 16, [1, 2, 3]).unwrap();
        let bytes = encode_png(&img).unwrap();
        assert!(decode_image(&bytes[..bytes.len() / 2]).is_err());
        assert!(decode_image(&bytes[..20]).is_err());
    }

    #[test]
    fn grid_counts() {
        let s448 = SlideImage::filled(448, 448, [0; 3]).unwrap();
        let g = make_grid(&s448, 224, 224).unwrap();
        assert_eq!((g.rows, g.cols), (2, 2));
        let g = make_grid(&s448, 224, 112).unwrap();
        assert_eq!((g.rows, g.cols), (3, 3));
        let origins: Vec<_> = (0..3).map(|c| g.origin(0, c).0).collect();
        assert_eq!(origins, vec![0, 112, 224]);
        let s100 = SlideImage::filled(100, 100, [0; 3]).unwrap();
        let g = make_grid(&s100, 224, 224).unwrap();
        assert_eq!((g.rows, g.cols), (1, 1));
    }

    #[test]
    fn grid_rejects_bad_geometry() {
        let s = SlideImage::filled(64, 64, [0; 3]).unwrap();
        assert!(matches!(make_grid(&s, 4, 4), Err(SlideIoError::TileSize { .. })));
        assert!(matches!(make_grid(&s, 16, 0), Err(SlideIoError::Stride { .. })));
        assert!(matches!(make_grid(&s, 16, 17), Err(SlideIoError::Stride { .. })));
    }

    #[test]
    fn reflection_indexing() {
        let idx: Vec<_> = (0..4).map(|i| reflect(i, 2)).collect();
        assert_eq!(idx, vec![0, 1, 1, 0]);
        assert!((0..10).all(|i| reflect(i, 1) == 0));
    }

    #[test]
    fn patch_from_one_pixel_is_constant() {
        let s = SlideImage::new(1, 1, vec![9, 8, 7]).unwrap();
        let grid = TileGrid {
            tile_size: 4,
            stride: 4,
            rows: 1,
            cols: 1,
        };
        let p = extract_patch(&s, &grid, 0, 0).unwrap();
        assert_eq!(p.pixels().len(), 48);
        assert!(p.pixels().chunks(3).all(|px| px == [9, 8, 7]));
    }

    #[test]
    fn patch_reflects_two_pixel_row() {
        let a = [1, 1, 1];
        let b = [2, 2, 2];
        let s = SlideImage::new(2, 1, [a, b].concat()).unwrap();
        let grid = TileGrid {
            tile_size: 4,
            stride: 4,
            rows: 1,
            cols: 1,
        };
        let p = extract_patch(&s, &grid, 0, 0).unwrap();
        for y in 0..4 {
            let row: Vec<_> = (0..4).map(|x| p.pixel(x, y)).collect();
            assert_eq!(row, vec![a, b, b, a]);
        }
    }

    #[test]
    fn patch_index_out_of_range() {
        let s = SlideImage::filled(16, 16, [0; 3]).unwrap();
        let g = make_grid(&s, 8, 8).unwrap();
        assert!(matches!(
            extract_patch(&s, &g, 2, 0),
            Err(SlideIoError::TileIndex { .. })
        ));
    }

    #[test]
    fn resize_constant_stays_constant() {
        let p = Patch::new((0, 0), 16, [5u8, 6, 7].repeat(256)).unwrap();
        let r = p.resized(8);
        assert_eq!(r.size(), 8);
        assert!(r.pixels().chunks(3).all(|px| px == [5, 6, 7]));
    }
}
