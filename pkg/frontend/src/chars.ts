// Class order must match the service's label set exactly; the grid is laid
// out in this order so cell index == class label.
export const FONTSET_CHARS =
  "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";

export const ALL_CHARS: readonly string[] = [...FONTSET_CHARS];

export function isKnownChar(ch: string): boolean {
  return ch.length === 1 && FONTSET_CHARS.includes(ch);
}
