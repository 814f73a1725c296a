/**
 * Minimal JPEG header inspection: enough to read pixel dimensions without
 * decoding image data.
 */

export class UndecodableImage extends Error {}

const SOF_MARKERS = new Set([
  0xc0, 0xc1, 0xc2, 0xc3, 0xc5, 0xc6, 0xc7, 0xc9, 0xca, 0xcb, 0xcd, 0xce, 0xcf,
]);

/** Width and height of a JPEG buffer, from its first start-of-frame marker. */
export function jpegDimensions(data: Buffer): { width: number; height: number } {
  if (data.length < 4 || data[0] !== 0xff || data[1] !== 0xd8) {
    throw new UndecodableImage("not a JPEG stream (missing SOI marker)");
  }
  let pos = 2;
  while (pos + 3 < data.length) {
    if (data[pos] !== 0xff) {
      // Fill bytes between segments are legal; anything else is corruption.
      pos += 1;
      continue;
    }
    const marker = data[pos + 1];
    if (marker === 0xd8 || (marker >= 0xd0 && marker <= 0xd9)) {
      pos += 2; // standalone marker, no length field
      continue;
    }
    const length = data.readUInt16BE(pos + 2);
    if (length < 2) {
      throw new UndecodableImage("corrupt segment length");
    }
    if (SOF_MARKERS.has(marker)) {
      if (pos + 9 > data.length) {
        throw new UndecodableImage("truncated start-of-frame segment");
      }
      const height = data.readUInt16BE(pos + 5);
      const width = data.readUInt16BE(pos + 7);
      if (width <= 0 || height <= 0) {
        throw new UndecodableImage("start-of-frame declares zero dimensions");
      }
      return { width, height };
    }
    pos += 2 + length;
  }
  throw new UndecodableImage("no start-of-frame marker found");
}
