/**
 * Canonical detection wire-format emission.
 *
 * The byte layout (2-space indent, fixed key order, trailing newline, plain
 * ECMAScript number formatting) is a cross-component contract: the consumer
 * emits the same structure through Python's json.dumps(indent=2), and files
 * produced on either side must compare equal byte for byte.
 */

export const WIRE_FORMAT_VERSION = 1;
export const GRAFFITI_LABEL = "graffiti";

export interface WireInstance {
  label: string;
  confidence: number;
  rle: { size: [number, number]; counts: number[] };
}

export interface WireImage {
  image_id: string;
  width: number;
  height: number;
  instances: WireInstance[];
}

export function emitDetectionDocument(images: WireImage[]): Buffer {
  const doc = {
    format_version: WIRE_FORMAT_VERSION,
    images: images.map((img) => ({
      image_id: img.image_id,
      width: img.width,
      height: img.height,
      instances: img.instances.map((inst) => ({
        label: inst.label,
        confidence: inst.confidence,
        rle: { size: inst.rle.size, counts: inst.rle.counts },
      })),
    })),
  };
  return Buffer.from(JSON.stringify(doc, null, 2) + "\n", "utf-8");
}
