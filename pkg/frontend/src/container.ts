/**
 * Parser for the `.c3gs` container (see docs/container.md in the repo root).
 *
 * Layout: "C3GS" | u16 version | 88-byte header | 7 section-table entries of
 * (u32 size, u32 crc32-of-compressed-bytes) | zlib payloads back to back.
 */

import { crc32 } from "./crc32.js";

export const MAGIC = "C3GS";
export const VERSION = 1;

export const SECTION_NAMES = [
  "positions",
  "opacity",
  "eta",
  "color_indices",
  "shape_indices",
  "color_codebook",
  "shape_codebook",
] as const;
export type SectionName = (typeof SECTION_NAMES)[number];

export interface MinMax {
  min: number;
  max: number;
}

export interface Header {
  n: number;
  kColor: number;
  kTotalColor: number;
  kShape: number;
  kTotalShape: number;
  shCoeffs: number;
  attrBits: number;
  colorIndexBits: number;
  shapeIndexBits: number;
  aabbMin: [number, number, number];
  aabbMax: [number, number, number];
  opacity: MinMax;
  eta: MinMax;
  color: MinMax;
  quat: MinMax;
  scale: MinMax;
}

export interface Container {
  header: Header;
  sections: Record<SectionName, Uint8Array>;
  sectionSizes: Record<SectionName, number>;
}

export class ContainerError extends Error {}
export class BadMagicError extends ContainerError {}
export class VersionMismatchError extends ContainerError {}
export class ChecksumError extends ContainerError {
  constructor(public readonly section: SectionName) {
    super(`CRC mismatch in section '${section}'`);
  }
}
export class TruncatedError extends ContainerError {}

const HEADER_SIZE = 88;
const TABLE_ENTRY = 8;

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  const ds = new DecompressionStream("deflate");
  const stream = new Blob([data as BlobPart]).stream().pipeThrough(ds);
  const buf = await new Response(stream).arrayBuffer();
  return new Uint8Array(buf);
}

export async function parseContainer(buffer: ArrayBuffer): Promise<Container> {
  const bytes = new Uint8Array(buffer);
  if (bytes.length < 6) throw new TruncatedError("container shorter than magic + version");
  const magic = String.fromCharCode(...bytes.subarray(0, 4));
  if (magic !== MAGIC) throw new BadMagicError(`bad magic '${magic}'`);
  const view = new DataView(buffer);
  const version = view.getUint16(4, true);
  if (version !== VERSION) throw new VersionMismatchError(`unsupported version ${version}`);
  if (bytes.length < 6 + HEADER_SIZE + TABLE_ENTRY * SECTION_NAMES.length) {
    throw new TruncatedError("truncated header");
  }

  let o = 6;
  const u32 = () => {
    const v = view.getUint32(o, true);
    o += 4;
    return v;
  };
  const u8 = () => bytes[o++];
  const f32 = () => {
    const v = view.getFloat32(o, true);
    o += 4;
    return v;
  };
  const mm = (): MinMax => ({ min: f32(), max: f32() });

  const header: Header = {
    n: u32(),
    kColor: u32(),
    kTotalColor: u32(),
    kShape: u32(),
    kTotalShape: u32(),
    shCoeffs: u8(),
    attrBits: u8(),
    colorIndexBits: u8(),
    shapeIndexBits: u8(),
    aabbMin: [f32(), f32(), f32()],
    aabbMax: [f32(), f32(), f32()],
    opacity: mm(),
    eta: mm(),
    color: mm(),
    quat: mm(),
    scale: mm(),
  };

  const table: { name: SectionName; size: number; crc: number }[] = [];
  for (const name of SECTION_NAMES) {
    table.push({ name, size: u32(), crc: u32() });
  }

  const sections = {} as Record<SectionName, Uint8Array>;
  const sectionSizes = {} as Record<SectionName, number>;
  for (const { name, size, crc } of table) {
    if (o + size > bytes.length) throw new TruncatedError(`truncated section '${name}'`);
    const comp = bytes.subarray(o, o + size);
    o += size;
    if (crc32(comp) !== crc) throw new ChecksumError(name);
    sections[name] = await inflate(comp);
    sectionSizes[name] = size;
  }
  return { header, sections, sectionSizes };
}
