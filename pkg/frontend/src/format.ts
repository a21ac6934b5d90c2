// Display helpers shared by the tables and panels.

export const RUN_STATUS_NAMES: Record<number, string> = {
  0: "pending",
  1: "distributed",
  2: "running",
  3: "success",
  4: "failed",
  5: "canceled",
  6: "building",
  7: "waiting-barrier",
  8: "orphaned",
};

export function runStatusName(code: number): string {
  return RUN_STATUS_NAMES[code] ?? `status-${code}`;
}

/** Render a 0..1 progress fraction as a percentage string. */
export function percent(fraction: number): string {
  const clamped = Math.min(1, Math.max(0, fraction));
  return `${Math.round(clamped * 100)}%`;
}

export function formatBytes(size: number): string {
  if (size < 1024) return `${size} B`;
  if (size < 1024 * 1024) return `${(size / 1024).toFixed(1)} KiB`;
  return `${(size / (1024 * 1024)).toFixed(1)} MiB`;
}

export function formatWhen(epochSeconds: number | null): string {
  if (epochSeconds === null) return "-";
  return new Date(epochSeconds * 1000).toLocaleTimeString();
}

/** Split a free-text parameter box into the parameter list the API expects. */
export function parseParameters(text: string): string[] {
  return text
    .split(/[,\n]/)
    .map((item) => item.trim())
    .filter((item) => item.length > 0);
}

export function parseMembers(text: string): string[] {
  return text
    .split(/[,\s]+/)
    .map((item) => item.trim())
    .filter((item) => item.length > 0);
}
