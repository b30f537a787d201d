/** The single number-to-text path for the whole UI.
 *
 * Every numeric string on screen goes through formatNumber, so tests can
 * verify each one traces back to a captured API response value.
 */

export function formatNumber(value: number): string {
  if (Number.isInteger(value)) return String(value);
  const abs = Math.abs(value);
  if (abs >= 1000) return value.toFixed(0);
  if (abs >= 1) return trimZeros(value.toFixed(2));
  return trimZeros(value.toPrecision(3));
}

function trimZeros(text: string): string {
  return text.includes(".") ? text.replace(/\.?0+$/, "") : text;
}

export function formatRelative(value: number | undefined,
                               newErrors: number | undefined,
                               mode: string): string {
  if (newErrors !== undefined) return `new errors: ${newErrors}`;
  if (value === undefined) return "n/a";
  const sign = value > 0 ? "+" : "";
  if (mode === "pct_error_change") return `${sign}${formatNumber(value)}%`;
  return `${sign}${formatNumber(value)}`;
}
