//! Binary graph snapshot, little-endian throughout:
//!
//! ```text
//! "TEMG" | u16 version
//! u32 N | N x (u32 len, utf8 address, u8 label: 0/1/255=unknown)
//! u64 M | M x (u32 src, u32 dst, i64 time, f64 amount, u64 index)
//! u32 rows | u32 cols | rows*cols x f64 (row-major)
//! ```

use std::io::{Read, Write};

use ndarray::Array2;

use super::{GraphError, NodeIndex, TemporalGraph, Transaction};

pub const CACHE_MAGIC: &[u8; 4] = b"TEMG";
pub const CACHE_VERSION: u16 = 1;

fn io_err(e: std::io::Error) -> GraphError {
    GraphError::Cache(e.to_string())
}

pub fn write_cache<W: Write>(mut w: W, graph: &TemporalGraph) -> Result<(), GraphError> {
    let mut buf = Vec::with_capacity(16 + graph.edges.len() * 32);
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(graph.num_nodes as u32).to_le_bytes());
    for (i, addr) in graph.node_ids.addresses().iter().enumerate() {
        buf.extend_from_slice(&(addr.len() as u32).to_le_bytes());
        buf.extend_from_slice(addr.as_bytes());
        buf.push(match graph.labels[i] {
            Some(false) => 0,
            Some(true) => 1,
            None => 255,
        });
    }
    buf.extend_from_slice(&(graph.edges.len() as u64).to_le_bytes());
    for e in &graph.edges {
        buf.extend_from_slice(&e.src.to_le_bytes());
        buf.extend_from_slice(&e.dst.to_le_bytes());
        buf.extend_from_slice(&e.time.to_le_bytes());
        buf.extend_from_slice(&e.amount.to_bits().to_le_bytes());
        buf.extend_from_slice(&e.index.to_le_bytes());
    }
    let (rows, cols) = graph.features.dim();
    buf.extend_from_slice(&(rows as u32).to_le_bytes());
    buf.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in graph.features.iter() {
        buf.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    w.write_all(&buf).map_err(io_err)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GraphError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| GraphError::Cache(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], GraphError> {
        Ok(self.take(N)?.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8, GraphError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, GraphError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, GraphError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, GraphError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn i64(&mut self) -> Result<i64, GraphError> {
        Ok(i64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, GraphError> {
        Ok(f64::from_bits(self.u64()?))
    }
}

pub fn read_cache<R: Read>(mut r: R) -> Result<TemporalGraph, GraphError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(io_err)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != CACHE_MAGIC {
        return Err(GraphError::Cache("bad magic".into()));
    }
    let version = c.u16()?;
    if version != CACHE_VERSION {
        return Err(GraphError::Cache(format!("unsupported version {version}")));
    }
    let n = c.u32()? as usize;
    let mut ids = NodeIndex::new();
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let len = c.u32()? as usize;
        let addr = std::str::from_utf8(c.take(len)?).map_err(|e| GraphError::Cache(e.to_string()))?;
        ids.intern(addr);
        labels.push(match c.u8()? {
            0 => Some(false),
            1 => Some(true),
            255 => None,
            other => return Err(GraphError::Cache(format!("bad label byte {other}"))),
        });
    }
    if ids.len() != n {
        return Err(GraphError::Cache("duplicate address in node table".into()));
    }
    let m = c.u64()? as usize;
    let mut edges = Vec::with_capacity(m.min(buf.len() / 32));
    for _ in 0..m {
        edges.push(Transaction {
            src: c.u32()?,
            dst: c.u32()?,
            time: c.i64()?,
            amount: c.f64()?,
            index: c.u64()?,
        });
    }
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(c.f64()?);
    }
    if c.pos != buf.len() {
        return Err(GraphError::Cache("trailing bytes".into()));
    }
    let features = Array2::from_shape_vec((rows, cols), data).map_err(|e| GraphError::Cache(e.to_string()))?;
    let graph = TemporalGraph { num_nodes: n, edges, node_ids: ids, features, labels };
    graph.validate()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::io::read_transactions;
    use crate::graph::ColumnSchema;

    #[test]
    fn bit_exact_round_trip() {
        let raw = read_transactions(
            "src,dst,time,amount\na,b,5,0.1\nb,c,2,3.3\nc,a,9,1e-300\n".as_bytes(),
            &ColumnSchema::default(),
        )
        .unwrap();
        let mut g = TemporalGraph::from_raw(raw).unwrap();
        g.attach_labels(&[("a".into(), true), ("zz".into(), false)]).unwrap();
        let mut bytes = Vec::new();
        write_cache(&mut bytes, &g).unwrap();
        let back = read_cache(bytes.as_slice()).unwrap();
        assert_eq!(back, g);
        let mut again = Vec::new();
        write_cache(&mut again, &back).unwrap();
        assert_eq!(bytes, again);
        assert_eq!(&bytes[..4], b"TEMG");
    }

    #[test]
    fn rejects_corruption() {
        assert!(read_cache(&b"TEMX\x01\x00"[..]).is_err());
        assert!(read_cache(&b"TEMG\x02\x00"[..]).is_err());
        assert!(read_cache(&b"TEMG\x01\x00\x05"[..]).is_err());
    }
}
