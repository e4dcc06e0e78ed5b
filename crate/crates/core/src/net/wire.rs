//! Line protocol.
//!
//! ```text
//! LOGIN <user>
//! CHALLENGE <puzzle_hex> <salt_hex> <mac_hex> <k> [<chain_index>]
//! RESPOND <user> base|offline <h_rp_hex> <mac_hex>
//! RESPOND <user> lamport <r_decimal> <prev_chain_hex> <mac_hex>
//! RESULT OK|FAIL
//! ERR <code>
//! ```
//!
//! One message per CRLF-terminated ASCII line, fields separated by single
//! spaces, binary values in lowercase hex. User ids are percent-encoded
//! (space, `%`, control and non-ASCII bytes). `<chain_index>` is present
//! only on Lamport challenges.

use std::fmt;
use std::io::{self, BufRead, Read, Write};

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, CONTROLS};

use crate::hashcodec::Digest;
use crate::protocol::{AuthResult, Challenge, Proof, ResponsePayload, Salt, Variant, MAX_K_BITS, SALT_LEN};

/// Longest accepted line, excluding the terminator.
pub const MAX_LINE: usize = 8 * 1024;

const USER_ID: &AsciiSet = &CONTROLS.add(b' ').add(b'%');

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    BadVerb,
    BadArity,
    BadHex,
    BadField,
    TooLong,
    BadEncoding,
    Unexpected,
    ChainExhausted,
    Internal,
}

impl ErrorCode {
    const ALL: [ErrorCode; 9] = [
        ErrorCode::BadVerb,
        ErrorCode::BadArity,
        ErrorCode::BadHex,
        ErrorCode::BadField,
        ErrorCode::TooLong,
        ErrorCode::BadEncoding,
        ErrorCode::Unexpected,
        ErrorCode::ChainExhausted,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadVerb => "bad-verb",
            ErrorCode::BadArity => "bad-arity",
            ErrorCode::BadHex => "bad-hex",
            ErrorCode::BadField => "bad-field",
            ErrorCode::TooLong => "too-long",
            ErrorCode::BadEncoding => "bad-encoding",
            ErrorCode::Unexpected => "unexpected",
            ErrorCode::ChainExhausted => "chain-exhausted",
            ErrorCode::Internal => "internal",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        ErrorCode::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("protocol error ({code}): {detail}")]
pub struct WireError {
    pub code: ErrorCode,
    pub detail: String,
}

impl WireError {
    fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        WireError {
            code,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Login { user_id: String },
    Challenge(Challenge),
    Respond(ResponsePayload),
    Result(AuthResult),
    Error(ErrorCode),
}

fn encode_user(user_id: &str) -> String {
    utf8_percent_encode(user_id, USER_ID).to_string()
}

/// Renders `msg` as one line, without the terminator.
pub fn encode_message(msg: &WireMessage) -> String {
    match msg {
        WireMessage::Login { user_id } => format!("LOGIN {}", encode_user(user_id)),
        WireMessage::Challenge(ch) => {
            let mut line = format!(
                "CHALLENGE {} {} {} {}",
                ch.puzzle_digest.to_hex(),
                hex::encode(ch.salt),
                ch.mac.to_hex(),
                ch.k_bits
            );
            if let Some(i) = ch.chain_index {
                line.push_str(&format!(" {i}"));
            }
            line
        }
        WireMessage::Respond(resp) => {
            let proof = match &resp.proof {
                Proof::Hashed(h) => h.to_hex(),
                Proof::Chain { r, prev_chain } => format!("{r} {}", hex::encode(prev_chain)),
            };
            format!(
                "RESPOND {} {} {} {}",
                encode_user(&resp.user_id),
                resp.variant,
                proof,
                resp.mac.to_hex()
            )
        }
        WireMessage::Result(AuthResult::Success) => "RESULT OK".into(),
        WireMessage::Result(AuthResult::Fail) => "RESULT FAIL".into(),
        WireMessage::Error(code) => format!("ERR {code}"),
    }
}

fn hex_bytes(field: &str) -> Result<Vec<u8>, WireError> {
    if field.bytes().any(|b| !matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return Err(WireError::new(ErrorCode::BadHex, "expected lowercase hex"));
    }
    hex::decode(field).map_err(|e| WireError::new(ErrorCode::BadHex, e.to_string()))
}

fn digest_field(field: &str) -> Result<Digest, WireError> {
    let bytes = hex_bytes(field)?;
    Digest::from_slice(&bytes).map_err(|e| WireError::new(ErrorCode::BadField, e.to_string()))
}

fn salt_field(field: &str) -> Result<Salt, WireError> {
    hex_bytes(field)?
        .try_into()
        .map_err(|_| WireError::new(ErrorCode::BadField, format!("salt must be {SALT_LEN} bytes")))
}

fn decimal_u32(field: &str) -> Result<u32, WireError> {
    let canonical = !field.is_empty()
        && field.bytes().all(|b| b.is_ascii_digit())
        && (field == "0" || !field.starts_with('0'));
    if !canonical {
        return Err(WireError::new(ErrorCode::BadField, format!("`{field}` is not a decimal")));
    }
    field
        .parse()
        .map_err(|_| WireError::new(ErrorCode::BadField, format!("`{field}` out of range")))
}

fn user_field(field: &str) -> Result<String, WireError> {
    let user = percent_decode_str(field)
        .decode_utf8()
        .map_err(|_| WireError::new(ErrorCode::BadEncoding, "user id is not UTF-8"))?;
    if user.is_empty() {
        return Err(WireError::new(ErrorCode::BadField, "empty user id"));
    }
    Ok(user.into_owned())
}

fn arity(fields: &[&str], expected: &[usize]) -> Result<(), WireError> {
    if expected.contains(&fields.len()) {
        Ok(())
    } else {
        Err(WireError::new(
            ErrorCode::BadArity,
            format!("{} takes {:?} fields, got {}", fields[0], expected, fields.len() - 1)
                .replace(['[', ']'], ""),
        ))
    }
}

/// Parses one line. A trailing `\r\n` or `\n` is ignored.
pub fn decode_message(line: &str) -> Result<WireMessage, WireError> {
    let line = line
        .strip_suffix("\r\n")
        .or_else(|| line.strip_suffix('\n'))
        .unwrap_or(line);
    if line.len() > MAX_LINE {
        return Err(WireError::new(ErrorCode::TooLong, format!("{} bytes", line.len())));
    }
    if line.bytes().any(|b| !(0x20..0x7f).contains(&b)) {
        return Err(WireError::new(ErrorCode::BadEncoding, "non-printable or non-ASCII byte"));
    }
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.iter().any(|f| f.is_empty()) {
        return Err(WireError::new(ErrorCode::BadField, "empty field"));
    }
    match fields[0] {
        "LOGIN" => {
            arity(&fields, &[2])?;
            Ok(WireMessage::Login {
                user_id: user_field(fields[1])?,
            })
        }
        "CHALLENGE" => {
            arity(&fields, &[5, 6])?;
            let k_bits = decimal_u32(fields[4])?;
            if k_bits > MAX_K_BITS {
                return Err(WireError::new(ErrorCode::BadField, "difficulty above 32 bits"));
            }
            Ok(WireMessage::Challenge(Challenge {
                puzzle_digest: digest_field(fields[1])?,
                salt: salt_field(fields[2])?,
                mac: digest_field(fields[3])?,
                k_bits,
                chain_index: fields.get(5).map(|f| decimal_u32(f)).transpose()?,
            }))
        }
        "RESPOND" => {
            if fields.len() < 3 {
                return Err(WireError::new(ErrorCode::BadArity, "RESPOND needs a user and a variant"));
            }
            let user_id = user_field(fields[1])?;
            let variant: Variant = fields[2]
                .parse()
                .map_err(|e: crate::protocol::ParseVariantError| WireError::new(ErrorCode::BadField, e.to_string()))?;
            if variant.name() != fields[2] {
                return Err(WireError::new(ErrorCode::BadField, "non-canonical variant name"));
            }
            let (proof, mac) = match variant {
                Variant::Base | Variant::OfflineResistant => {
                    arity(&fields, &[5])?;
                    (Proof::Hashed(digest_field(fields[3])?), fields[4])
                }
                Variant::Lamport => {
                    arity(&fields, &[6])?;
                    let r = decimal_u32(fields[3])?;
                    let prev_chain = hex_bytes(fields[4])?;
                    (Proof::Chain { r, prev_chain }, fields[5])
                }
            };
            Ok(WireMessage::Respond(ResponsePayload {
                user_id,
                variant,
                proof,
                mac: digest_field(mac)?,
            }))
        }
        "RESULT" => {
            arity(&fields, &[2])?;
            match fields[1] {
                "OK" => Ok(WireMessage::Result(AuthResult::Success)),
                "FAIL" => Ok(WireMessage::Result(AuthResult::Fail)),
                other => Err(WireError::new(ErrorCode::BadField, format!("unknown result `{other}`"))),
            }
        }
        "ERR" => {
            arity(&fields, &[2])?;
            ErrorCode::parse(fields[1])
                .map(WireMessage::Error)
                .ok_or_else(|| WireError::new(ErrorCode::BadField, format!("unknown error code `{}`", fields[1])))
        }
        other => Err(WireError::new(
            ErrorCode::BadVerb,
            format!("unknown verb `{}`", other.chars().take(16).collect::<String>()),
        )),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LineError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
}

/// Reads one terminated line of at most [`MAX_LINE`] bytes. `Ok(None)` on a
/// clean end of stream.
pub fn read_line<R: BufRead>(reader: &mut R) -> Result<Option<String>, LineError> {
    let mut buf = Vec::new();
    let limit = (MAX_LINE + 2) as u64;
    reader.by_ref().take(limit).read_until(b'\n', &mut buf)?;
    if buf.is_empty() {
        return Ok(None);
    }
    if buf.last() != Some(&b'\n') {
        let code = if buf.len() as u64 >= limit {
            ErrorCode::TooLong
        } else {
            ErrorCode::BadEncoding
        };
        return Err(WireError::new(code, "line not terminated").into());
    }
    String::from_utf8(buf)
        .map(Some)
        .map_err(|_| WireError::new(ErrorCode::BadEncoding, "line is not ASCII").into())
}

pub fn read_message<R: BufRead>(reader: &mut R) -> Result<Option<WireMessage>, LineError> {
    match read_line(reader)? {
        Some(line) => Ok(Some(decode_message(&line)?)),
        None => Ok(None),
    }
}

pub fn write_message<W: Write>(writer: &mut W, msg: &WireMessage) -> io::Result<()> {
    let mut line = encode_message(msg);
    line.push_str("\r\n");
    writer.write_all(line.as_bytes())?;
    writer.flush()
}
