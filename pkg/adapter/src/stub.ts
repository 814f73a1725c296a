/**
 * Deterministic stub segmenter: one fixed-size rectangle per image, placed
 * and weighted by hashing the image id.
 *
 * Contract (must stay in lockstep with the consumer's committed golden file):
 * the rectangle is floor(W/4) x floor(H/4) (at least 1x1); sha256 of the
 * image_id string yields three big-endian uint32 words h1, h2, h3; the
 * rectangle's top-left corner is (h1 % (W-rw+1), h2 % (H-rh+1)) and the
 * confidence is 0.5 + (h3 % 5000) / 10000.
 */

import { createHash } from "node:crypto";

import { encodeRect } from "./rle";
import { GRAFFITI_LABEL, WireInstance } from "./wire";

export function stubInstance(imageId: string, width: number, height: number): WireInstance {
  const rw = Math.max(1, Math.floor(width / 4));
  const rh = Math.max(1, Math.floor(height / 4));
  const digest = createHash("sha256").update(imageId, "ascii").digest();
  const h1 = digest.readUInt32BE(0);
  const h2 = digest.readUInt32BE(4);
  const h3 = digest.readUInt32BE(8);
  const x0 = h1 % (width - rw + 1);
  const y0 = h2 % (height - rh + 1);
  const confidence = 0.5 + (h3 % 5000) / 10000;
  return {
    label: GRAFFITI_LABEL,
    confidence,
    rle: { size: [height, width], counts: encodeRect(height, width, x0, y0, rw, rh) },
  };
}
