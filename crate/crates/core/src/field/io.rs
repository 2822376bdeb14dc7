use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Field, GridSpec, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::Real;

const FIELD_MAGIC: &[u8; 4] = b"PCNF";
const TRAJ_MAGIC: &[u8; 4] = b"PCNT";
const VERSION: u32 = 1;

struct Header {
    grid: GridSpec,
    channels: usize,
}

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], grid: &GridSpec, channels: usize) -> std::io::Result<()> {
    w.write_all(magic)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[grid.ndim() as u8, channels as u8])?;
    for &n in grid.extents() {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    w.write_all(&grid.dx().to_le_bytes())
}

fn write_payload<W: Write, T: Real>(w: &mut W, data: &[T]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    w.write_all(&buf)
}

fn check_encodable(grid: &GridSpec, channels: usize) -> Result<()> {
    if channels > u8::MAX as usize || grid.extents().iter().any(|&n| n > u32::MAX as usize) {
        return Err(Error::ShapeOverflow(format!(
            "{channels} channels on {:?} does not fit the header",
            grid.extents()
        )));
    }
    Ok(())
}

/// Serialises a field in the `PCNF` format.
pub fn write_field<W: Write, T: Real>(w: &mut W, field: &Field<T>) -> std::io::Result<()> {
    write_header(w, FIELD_MAGIC, field.grid(), field.channels())?;
    write_payload(w, field.data())
}

/// Serialises a trajectory in the `PCNT` format.
pub fn write_traj<W: Write, T: Real>(w: &mut W, traj: &Trajectory<T>) -> std::io::Result<()> {
    write_header(w, TRAJ_MAGIC, traj.grid(), traj.channels())?;
    w.write_all(&(traj.len() as u32).to_le_bytes())?;
    w.write_all(&traj.dt().to_le_bytes())?;
    w.write_all(&traj.t0().to_le_bytes())?;
    for f in traj.frames() {
        write_payload(w, f.data())?;
    }
    Ok(())
}

pub fn save_field<T: Real>(path: impl AsRef<Path>, field: &Field<T>) -> Result<()> {
    let path = path.as_ref();
    check_encodable(field.grid(), field.channels())?;
    let mut buf = Vec::new();
    write_field(&mut buf, field).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn save_traj<T: Real>(path: impl AsRef<Path>, traj: &Trajectory<T>) -> Result<()> {
    let path = path.as_ref();
    check_encodable(traj.grid(), traj.channels())?;
    if traj.len() > u32::MAX as usize {
        return Err(Error::ShapeOverflow(format!("{} frames", traj.len())));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_traj(&mut w, traj)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::CorruptHeader(format!("file truncated while reading {what}"))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<Header> {
        let found = self.take(4, "magic")?;
        if found != magic {
            return Err(Error::UnrecognizedFormat {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let ndim = self.u8("ndim")? as usize;
        let channels = self.u8("channels")? as usize;
        let mut extents = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            extents.push(self.u32("extents")? as usize);
        }
        let dx = self.f64("dx")?;
        let grid = GridSpec::new(extents, dx).map_err(|e| Error::CorruptHeader(e.to_string()))?;
        if channels == 0 {
            return Err(Error::CorruptHeader("zero channels".into()));
        }
        Ok(Header { grid, channels })
    }

    fn payload<T: Real>(&mut self, count: usize) -> Result<Vec<T>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| Error::ShapeOverflow(format!("{count} values")))?;
        let raw = self.take(bytes, "payload")?;
        raw.chunks_exact(8)
            .map(|c| {
                let v = f64::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(T::of(v))
                } else {
                    Err(Error::NonFinite("file payload".into()))
                }
            })
            .collect()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::CorruptHeader(format!(
                "{} trailing bytes after payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn frame_len(h: &Header) -> Result<usize> {
    h.grid
        .len()
        .checked_mul(h.channels)
        .ok_or_else(|| Error::ShapeOverflow(format!("{} channels on {:?}", h.channels, h.grid.extents())))
}

pub fn read_field<T: Real>(bytes: &[u8]) -> Result<Field<T>> {
    let mut r = Reader { bytes, pos: 0 };
    let h = r.header(FIELD_MAGIC)?;
    let data = r.payload(frame_len(&h)?)?;
    r.finish()?;
    Ok(Field::from_raw(h.grid, h.channels, data))
}

pub fn read_traj<T: Real>(bytes: &[u8]) -> Result<Trajectory<T>> {
    let mut r = Reader { bytes, pos: 0 };
    let h = r.header(TRAJ_MAGIC)?;
    let n_frames = r.u32("frame count")? as usize;
    let dt = r.f64("dt")?;
    let t0 = r.f64("t0")?;
    let per = frame_len(&h)?;
    per.checked_mul(n_frames)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::ShapeOverflow(format!("{n_frames} frames of {per} values")))?;
    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        frames.push(Field::from_raw(h.grid.clone(), h.channels, r.payload(per)?));
    }
    r.finish()?;
    Trajectory::new(frames, dt, t0).map_err(|e| Error::CorruptHeader(e.to_string()))
}

pub fn load_field<T: Real>(path: impl AsRef<Path>) -> Result<Field<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_field(&bytes)
}

pub fn load_traj<T: Real>(path: impl AsRef<Path>) -> Result<Trajectory<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_traj(&bytes)
}
