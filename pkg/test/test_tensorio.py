"""
Test cases for the TNSR tensor file codec
Covers:
- Header layout (magic, version, rank, dims)
- Lossless float32 roundtrip through a file
- Error messages for truncated and malformed files
"""

import os
import struct
import sys
import tempfile
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cemri import tensorio
from cemri.errors import DataError, TensorFormatError


class TestTensorEncoding(unittest.TestCase):
    """Byte layout of encoded tensors"""

    def test_header_layout(self):
        """Header is magic, version 1, rank and little-endian dims"""
        raw = tensorio.encode_tensor(np.zeros((2, 3), dtype=np.float32))

        self.assertEqual(raw[0:4], b"TNSR")
        self.assertEqual(struct.unpack("<III", raw[4:16]), (1, 2, 2))
        self.assertEqual(struct.unpack("<I", raw[16:20])[0], 3)
        self.assertEqual(len(raw), 20 + 6 * 4)
        print("✓ TNSR header layout is correct")

    def test_payload_is_row_major_little_endian(self):
        """Payload holds float32 LE values in C order"""
        array = np.arange(6, dtype=np.float32).reshape(2, 3)
        raw = tensorio.encode_tensor(array)
        payload = np.frombuffer(raw[20:], dtype="<f4")

        np.testing.assert_array_equal(payload, array.ravel(order="C"))
        print("✓ payload is row-major float32")

    def test_scalar_tensor(self):
        """Rank-0 tensors carry no dims and one value"""
        raw = tensorio.encode_tensor(np.float32(2.5))
        decoded = tensorio.decode_tensor(raw)

        self.assertEqual(decoded.shape, ())
        self.assertEqual(float(decoded), 2.5)
        print("✓ rank-0 tensor decodes")


class TestTensorFiles(unittest.TestCase):
    """File roundtrip and error reporting"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "volume.tnsr")

    def tearDown(self):
        self.tmp.cleanup()

    def test_roundtrip_is_bit_exact(self):
        """read(write(x)) == x for float32 data"""
        rng = np.random.default_rng(3)
        array = rng.normal(size=(4, 5, 6)).astype(np.float32)

        tensorio.write_tensor(self.path, array)
        loaded = tensorio.read_tensor(self.path)

        self.assertEqual(loaded.dtype, np.float32)
        np.testing.assert_array_equal(loaded, array)
        self.assertFalse(os.path.exists(self.path + ".tmp"))
        print("✓ TNSR roundtrip is bit-exact")

    def test_truncated_payload_names_file_and_byte_counts(self):
        """Truncation reports the file and the expected byte count"""
        tensorio.write_tensor(self.path, np.ones((8, 8), dtype=np.float32))

        with open(self.path, "rb") as f:
            raw = f.read()

        with open(self.path, "wb") as f:
            f.write(raw[:-10])

        with self.assertRaises(TensorFormatError) as ctx:
            tensorio.read_tensor(self.path)

        message = str(ctx.exception)
        self.assertIn(self.path, message)
        self.assertIn("expected 256 bytes", message)
        self.assertIn("found 246", message)
        self.assertIsInstance(ctx.exception, DataError)
        print("✓ truncated payload error names file and sizes")

    def test_bad_magic(self):
        """Files without the TNSR magic are rejected"""
        with open(self.path, "wb") as f:
            f.write(b"NOPE" + struct.pack("<II", 1, 0) + b"\0\0\0\0")

        with self.assertRaises(TensorFormatError) as ctx:
            tensorio.read_tensor(self.path)

        self.assertIn("bad magic", str(ctx.exception))
        print("✓ bad magic rejected")

    def test_unsupported_version(self):
        """Only version 1 is accepted"""
        with open(self.path, "wb") as f:
            f.write(b"TNSR" + struct.pack("<II", 2, 0))

        with self.assertRaises(TensorFormatError):
            tensorio.read_tensor(self.path)

        print("✓ unsupported version rejected")

    def test_truncated_header(self):
        """A header shorter than its rank implies is rejected"""
        with open(self.path, "wb") as f:
            f.write(b"TNSR" + struct.pack("<II", 1, 3) + struct.pack("<I", 4))

        with self.assertRaises(TensorFormatError) as ctx:
            tensorio.read_tensor(self.path)

        self.assertIn("truncated header", str(ctx.exception))
        print("✓ truncated header rejected")

    def test_trailing_bytes(self):
        """Extra bytes after the payload are rejected"""
        raw = tensorio.encode_tensor(np.ones(3, dtype=np.float32)) + b"\0"

        with self.assertRaises(TensorFormatError) as ctx:
            tensorio.decode_tensor(raw, source="extra.tnsr")

        self.assertIn("trailing", str(ctx.exception))
        print("✓ trailing bytes rejected")

    def test_missing_file(self):
        """A missing file surfaces as FileNotFoundError"""
        with self.assertRaises(FileNotFoundError):
            tensorio.read_tensor(os.path.join(self.tmp.name, "absent.tnsr"))

        print("✓ missing file raises FileNotFoundError")


if __name__ == "__main__":
    unittest.main()
