export function fmtClock(seconds: number): string {
  const clamped = Math.max(0, Math.floor(seconds));
  const minutes = Math.floor(clamped / 60);
  const rest = clamped % 60;
  return `${minutes}:${String(rest).padStart(2, "0")}`;
}

export type TextSegment = { kind: "text" | "math"; value: string };

// Splits $...$ runs out of question text for the preview pane. The raw
// text stays the source of truth; an unpaired $ is left as plain text.
export function segmentMath(text: string): TextSegment[] {
  const segments: TextSegment[] = [];
  let rest = text;
  while (rest.length > 0) {
    const open = rest.indexOf("$");
    if (open < 0) {
      segments.push({ kind: "text", value: rest });
      break;
    }
    const close = rest.indexOf("$", open + 1);
    if (close < 0) {
      segments.push({ kind: "text", value: rest });
      break;
    }
    if (open > 0) {
      segments.push({ kind: "text", value: rest.slice(0, open) });
    }
    segments.push({ kind: "math", value: rest.slice(open + 1, close) });
    rest = rest.slice(close + 1);
  }
  return segments;
}
