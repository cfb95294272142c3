"""Export the scikit-learn 8x8 digits as gzip IDX files for the test suite.

Pixel intensities 0..16 are rescaled to 0..255 (rounded).
"""
import gzip
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx(path, array, magic):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for d in array.shape:
            f.write(struct.pack(">I", d))
        f.write(array.astype(np.uint8).tobytes())


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digits = load_digits()
    images = np.rint(digits.images * 255.0 / 16.0).astype(np.uint8)
    write_idx(out / "digits8x8-images-idx3-ubyte.gz", images, 0x00000803)
    write_idx(out / "digits8x8-labels-idx1-ubyte.gz", digits.target.astype(np.uint8), 0x00000801)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data")
