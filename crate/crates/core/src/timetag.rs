//! `.qtt` time-tag container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "QTT1"
//!      4     2  version (1)
//!      6     2  channel map length N
//!      8    32  config digest (SHA-256 of the generating configuration)
//!     40     8  record count
//!     48    2N  channel map: (channel id u8, role code u8) per entry
//!   48+2N  12k  records: timestamp_ps u64, channel u8, flags u8, 2 reserved zero bytes
//! ```
//!
//! Role codes: 0 trigger, 1 pmt, 2 apd, 3 snspd. Flag bit 0 marks an
//! overflow; the other flag bits are reserved and must be zero.

use std::fmt;
use std::io::{self, Read, Seek, SeekFrom, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"QTT1";
pub const VERSION: u16 = 1;
pub const FIXED_HEADER_LEN: u64 = 48;
pub const RECORD_LEN: u64 = 12;
pub const FLAG_OVERFLOW: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRole {
    Trigger,
    Pmt,
    Apd,
    Snspd,
}

impl ChannelRole {
    pub fn code(self) -> u8 {
        match self {
            ChannelRole::Trigger => 0,
            ChannelRole::Pmt => 1,
            ChannelRole::Apd => 2,
            ChannelRole::Snspd => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => ChannelRole::Trigger,
            1 => ChannelRole::Pmt,
            2 => ChannelRole::Apd,
            3 => ChannelRole::Snspd,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            ChannelRole::Trigger => "trigger",
            ChannelRole::Pmt => "pmt",
            ChannelRole::Apd => "apd",
            ChannelRole::Snspd => "snspd",
        }
    }
}

impl fmt::Display for ChannelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTagRecord {
    pub timestamp_ps: u64,
    pub channel: u8,
    pub flags: u8,
}

impl TimeTagRecord {
    pub fn new(timestamp_ps: u64, channel: u8) -> Self {
        Self {
            timestamp_ps,
            channel,
            flags: 0,
        }
    }

    pub fn to_bytes(&self) -> [u8; RECORD_LEN as usize] {
        let mut out = [0u8; RECORD_LEN as usize];
        out[..8].copy_from_slice(&self.timestamp_ps.to_le_bytes());
        out[8] = self.channel;
        out[9] = self.flags;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u16,
    pub channel_map: Vec<(u8, ChannelRole)>,
    pub config_digest: [u8; 32],
    pub record_count: u64,
}

impl StreamHeader {
    pub fn new(channel_map: Vec<(u8, ChannelRole)>, config_digest: [u8; 32]) -> Self {
        Self {
            version: VERSION,
            channel_map,
            config_digest,
            record_count: 0,
        }
    }

    pub fn encoded_len(&self) -> u64 {
        FIXED_HEADER_LEN + 2 * self.channel_map.len() as u64
    }

    pub fn role_of(&self, channel: u8) -> Option<ChannelRole> {
        self.channel_map
            .iter()
            .find(|(id, _)| *id == channel)
            .map(|(_, role)| *role)
    }

    pub fn channels_with_role(&self, role: ChannelRole) -> impl Iterator<Item = u8> + '_ {
        self.channel_map
            .iter()
            .filter(move |(_, r)| *r == role)
            .map(|(id, _)| *id)
    }

    fn channel_lookup(&self) -> [bool; 256] {
        let mut mapped = [false; 256];
        for (id, _) in &self.channel_map {
            mapped[*id as usize] = true;
        }
        mapped
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len() as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.channel_map.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.config_digest);
        out.extend_from_slice(&self.record_count.to_le_bytes());
        for (id, role) in &self.channel_map {
            out.push(*id);
            out.push(role.code());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatErrorKind {
    Io(io::ErrorKind),
    BadMagic([u8; 4]),
    UnsupportedVersion(u16),
    TruncatedHeader,
    InvalidRole(u8),
    DuplicateChannel(u8),
    TruncatedRecord { index: u64 },
    NonMonotoneTimestamp { index: u64, previous: u64, found: u64 },
    UnmappedChannel { index: u64, channel: u8 },
    ReservedBits { index: u64 },
    RecordCountMismatch { declared: u64, found: u64 },
    TooManyChannels(usize),
}

impl FormatErrorKind {
    /// Stable short reason code.
    pub fn code(&self) -> &'static str {
        match self {
            FormatErrorKind::Io(_) => "io",
            FormatErrorKind::BadMagic(_) => "bad-magic",
            FormatErrorKind::UnsupportedVersion(_) => "bad-version",
            FormatErrorKind::TruncatedHeader => "truncated-header",
            FormatErrorKind::InvalidRole(_) => "invalid-role",
            FormatErrorKind::DuplicateChannel(_) => "duplicate-channel",
            FormatErrorKind::TruncatedRecord { .. } => "truncated-record",
            FormatErrorKind::NonMonotoneTimestamp { .. } => "non-monotone",
            FormatErrorKind::UnmappedChannel { .. } => "unmapped-channel",
            FormatErrorKind::ReservedBits { .. } => "reserved-bits",
            FormatErrorKind::RecordCountMismatch { .. } => "count-mismatch",
            FormatErrorKind::TooManyChannels(_) => "too-many-channels",
        }
    }
}

impl fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatErrorKind::Io(kind) => write!(f, "i/o error: {kind}"),
            FormatErrorKind::BadMagic(m) => write!(f, "bad magic {m:02x?}"),
            FormatErrorKind::UnsupportedVersion(v) => write!(f, "unsupported version {v}"),
            FormatErrorKind::TruncatedHeader => write!(f, "header truncated"),
            FormatErrorKind::InvalidRole(code) => write!(f, "invalid channel role code {code}"),
            FormatErrorKind::DuplicateChannel(id) => write!(f, "channel {id} mapped twice"),
            FormatErrorKind::TruncatedRecord { index } => write!(f, "record {index} truncated"),
            FormatErrorKind::NonMonotoneTimestamp {
                index,
                previous,
                found,
            } => write!(
                f,
                "record {index} timestamp {found} ps precedes previous {previous} ps"
            ),
            FormatErrorKind::UnmappedChannel { index, channel } => {
                write!(f, "record {index} uses unmapped channel {channel}")
            }
            FormatErrorKind::ReservedBits { index } => {
                write!(f, "record {index} has reserved bits set")
            }
            FormatErrorKind::RecordCountMismatch { declared, found } => write!(
                f,
                "header declares {declared} records, stream holds {found}"
            ),
            FormatErrorKind::TooManyChannels(n) => write!(f, "{n} channels exceed the map limit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte offset {offset} [{code}]", code = kind.code())]
pub struct FormatError {
    pub offset: u64,
    pub kind: FormatErrorKind,
}

impl FormatError {
    fn new(offset: u64, kind: FormatErrorKind) -> Self {
        Self { offset, kind }
    }
}

/// Streaming `.qtt` writer. The record count is patched into the header by
/// [`StreamWriter::finish`], so the sink must be seekable.
pub struct StreamWriter<W: Write + Seek> {
    sink: W,
    header: StreamHeader,
    mapped: [bool; 256],
    start: u64,
    count: u64,
    last_timestamp: Option<u64>,
}

impl<W: Write + Seek> StreamWriter<W> {
    pub fn new(mut sink: W, header: StreamHeader) -> Result<Self, FormatError> {
        validate_map(&header.channel_map)?;
        let start = sink.stream_position().map_err(|e| io_error(0, &e))?;
        let mut header = header;
        header.record_count = 0;
        sink.write_all(&header.to_bytes())
            .map_err(|e| io_error(start, &e))?;
        let mapped = header.channel_lookup();
        Ok(Self {
            sink,
            header,
            mapped,
            start,
            count: 0,
            last_timestamp: None,
        })
    }

    fn offset(&self) -> u64 {
        self.start + self.header.encoded_len() + self.count * RECORD_LEN
    }

    pub fn write(&mut self, record: &TimeTagRecord) -> Result<(), FormatError> {
        let index = self.count;
        if let Some(prev) = self.last_timestamp {
            if record.timestamp_ps < prev {
                return Err(FormatError::new(
                    self.offset(),
                    FormatErrorKind::NonMonotoneTimestamp {
                        index,
                        previous: prev,
                        found: record.timestamp_ps,
                    },
                ));
            }
        }
        if !self.mapped[record.channel as usize] {
            return Err(FormatError::new(
                self.offset(),
                FormatErrorKind::UnmappedChannel {
                    index,
                    channel: record.channel,
                },
            ));
        }
        if record.flags & !FLAG_OVERFLOW != 0 {
            return Err(FormatError::new(
                self.offset(),
                FormatErrorKind::ReservedBits { index },
            ));
        }
        let offset = self.offset();
        self.sink
            .write_all(&record.to_bytes())
            .map_err(|e| io_error(offset, &e))?;
        self.count += 1;
        self.last_timestamp = Some(record.timestamp_ps);
        Ok(())
    }

    /// Patches the record count and returns the sink, the final header and
    /// the number of bytes written.
    pub fn finish(mut self) -> Result<(W, StreamHeader, u64), FormatError> {
        let end = self.offset();
        let count_at = self.start + 40;
        self.sink
            .seek(SeekFrom::Start(count_at))
            .and_then(|_| self.sink.write_all(&self.count.to_le_bytes()))
            .and_then(|_| self.sink.seek(SeekFrom::Start(end)))
            .and_then(|_| self.sink.flush())
            .map_err(|e| io_error(count_at, &e))?;
        self.header.record_count = self.count;
        Ok((self.sink, self.header, end - self.start))
    }
}

/// Writes a complete stream and returns the number of bytes written.
pub fn write_stream<W, I>(header: &StreamHeader, records: I, sink: W) -> Result<u64, FormatError>
where
    W: Write + Seek,
    I: IntoIterator<Item = TimeTagRecord>,
{
    let mut writer = StreamWriter::new(sink, header.clone())?;
    for record in records {
        writer.write(&record)?;
    }
    let (_, _, bytes) = writer.finish()?;
    Ok(bytes)
}

fn validate_map(map: &[(u8, ChannelRole)]) -> Result<(), FormatError> {
    if map.len() > 256 {
        return Err(FormatError::new(
            FIXED_HEADER_LEN,
            FormatErrorKind::TooManyChannels(map.len()),
        ));
    }
    let mut seen = [false; 256];
    for (i, (id, _)) in map.iter().enumerate() {
        if std::mem::replace(&mut seen[*id as usize], true) {
            return Err(FormatError::new(
                FIXED_HEADER_LEN + 2 * i as u64,
                FormatErrorKind::DuplicateChannel(*id),
            ));
        }
    }
    Ok(())
}

fn io_error(offset: u64, e: &io::Error) -> FormatError {
    FormatError::new(offset, FormatErrorKind::Io(e.kind()))
}

/// Reads into `buf` until it is full or the source is exhausted; returns
/// the number of bytes read.
fn fill<R: Read>(source: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Parses the header and returns it with a lazy, validating record iterator.
/// Memory use is constant in the number of records.
pub fn read_stream<R: Read>(mut source: R) -> Result<(StreamHeader, Records<R>), FormatError> {
    let mut fixed = [0u8; FIXED_HEADER_LEN as usize];
    let n = fill(&mut source, &mut fixed).map_err(|e| io_error(0, &e))?;
    if n >= 4 && fixed[..4] != MAGIC {
        return Err(FormatError::new(
            0,
            FormatErrorKind::BadMagic(fixed[..4].try_into().unwrap()),
        ));
    }
    if n < fixed.len() {
        return Err(FormatError::new(n as u64, FormatErrorKind::TruncatedHeader));
    }
    let version = u16::from_le_bytes([fixed[4], fixed[5]]);
    if version != VERSION {
        return Err(FormatError::new(
            4,
            FormatErrorKind::UnsupportedVersion(version),
        ));
    }
    let channels = u16::from_le_bytes([fixed[6], fixed[7]]) as usize;
    if channels > 256 {
        return Err(FormatError::new(
            6,
            FormatErrorKind::TooManyChannels(channels),
        ));
    }
    let config_digest: [u8; 32] = fixed[8..40].try_into().unwrap();
    let record_count = u64::from_le_bytes(fixed[40..48].try_into().unwrap());

    let mut map_bytes = vec![0u8; 2 * channels];
    let n = fill(&mut source, &mut map_bytes).map_err(|e| io_error(FIXED_HEADER_LEN, &e))?;
    if n < map_bytes.len() {
        return Err(FormatError::new(
            FIXED_HEADER_LEN + n as u64,
            FormatErrorKind::TruncatedHeader,
        ));
    }
    let mut channel_map = Vec::with_capacity(channels);
    for (i, pair) in map_bytes.chunks_exact(2).enumerate() {
        let role = ChannelRole::from_code(pair[1]).ok_or_else(|| {
            FormatError::new(
                FIXED_HEADER_LEN + 2 * i as u64 + 1,
                FormatErrorKind::InvalidRole(pair[1]),
            )
        })?;
        channel_map.push((pair[0], role));
    }
    validate_map(&channel_map)?;

    let header = StreamHeader {
        version,
        channel_map,
        config_digest,
        record_count,
    };
    let records = Records {
        mapped: header.channel_lookup(),
        offset: header.encoded_len(),
        declared: record_count,
        index: 0,
        last_timestamp: None,
        source,
        done: false,
    };
    Ok((header, records))
}

pub struct Records<R: Read> {
    source: R,
    mapped: [bool; 256],
    offset: u64,
    declared: u64,
    index: u64,
    last_timestamp: Option<u64>,
    done: bool,
}

impl<R: Read> std::fmt::Debug for Records<R> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Records")
            .field("offset", &self.offset)
            .field("declared", &self.declared)
            .field("index", &self.index)
            .field("done", &self.done)
            .finish_non_exhaustive()
    }
}

impl<R: Read> Records<R> {
    pub fn records_read(&self) -> u64 {
        self.index
    }

    fn fail(&mut self, offset: u64, kind: FormatErrorKind) -> Option<Result<TimeTagRecord, FormatError>> {
        self.done = true;
        Some(Err(FormatError::new(offset, kind)))
    }
}

impl<R: Read> Iterator for Records<R> {
    type Item = Result<TimeTagRecord, FormatError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut buf = [0u8; RECORD_LEN as usize];
        let n = match fill(&mut self.source, &mut buf) {
            Ok(n) => n,
            Err(e) => {
                let kind = FormatErrorKind::Io(e.kind());
                return self.fail(self.offset, kind);
            }
        };
        if self.index == self.declared {
            if n == 0 {
                self.done = true;
                return None;
            }
            let kind = FormatErrorKind::RecordCountMismatch {
                declared: self.declared,
                found: self.declared + 1,
            };
            return self.fail(self.offset, kind);
        }
        if n == 0 {
            let kind = FormatErrorKind::RecordCountMismatch {
                declared: self.declared,
                found: self.index,
            };
            return self.fail(self.offset, kind);
        }
        if n < buf.len() {
            let kind = FormatErrorKind::TruncatedRecord { index: self.index };
            return self.fail(self.offset + n as u64, kind);
        }
        let record = TimeTagRecord {
            timestamp_ps: u64::from_le_bytes(buf[..8].try_into().unwrap()),
            channel: buf[8],
            flags: buf[9],
        };
        let index = self.index;
        if record.flags & !FLAG_OVERFLOW != 0 || buf[10] != 0 || buf[11] != 0 {
            return self.fail(self.offset + 9, FormatErrorKind::ReservedBits { index });
        }
        if !self.mapped[record.channel as usize] {
            let kind = FormatErrorKind::UnmappedChannel {
                index,
                channel: record.channel,
            };
            return self.fail(self.offset + 8, kind);
        }
        if let Some(prev) = self.last_timestamp {
            if record.timestamp_ps < prev {
                let kind = FormatErrorKind::NonMonotoneTimestamp {
                    index,
                    previous: prev,
                    found: record.timestamp_ps,
                };
                return self.fail(self.offset, kind);
            }
        }
        self.last_timestamp = Some(record.timestamp_ps);
        self.index += 1;
        self.offset += RECORD_LEN;
        Some(Ok(record))
    }
}
