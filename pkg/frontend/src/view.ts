// Pure view-model: everything displayed derives from the bundle geometry and
// the service transcript, so refetching the session rebuilds the identical
// view and every shown score is the service's own number.

import type {
  BboxArray,
  BundleInfo,
  ScoredRegion,
  SessionSnapshot,
} from './api.js';

export interface OverlayBox {
  regionId: number;
  bbox: BboxArray;
  rank: number; // 1-based rank in the current ranking
  color: string;
  presented: boolean;
  rejected: boolean;
  isBStar: boolean;
}

export interface SidebarEntry {
  regionId: number;
  rank: number;
  score: number;
  rejected: boolean;
  presented: boolean;
}

export interface TurnSummary {
  turn: number;
  zPosSize: number;
  zNegSize: number;
  rejectedIds: number[];
  feedback: string | null;
}

export interface SessionView {
  status: string;
  turn: number;
  controlsEnabled: boolean;
  overlays: OverlayBox[];
  sidebar: SidebarEntry[];
  history: TurnSummary[];
  // raw service scores per region, one entry per interaction step
  sparklines: Map<number, number[]>;
  bStar: { regionId: number; bbox: BboxArray } | null;
}

// Rank-based color ramp: contrastive scores are unbounded below after
// penalties, so color follows rank, not value. Best rank = warm, tail = cold.
export function rankColor(rank: number, total: number): string {
  const t = total <= 1 ? 0 : (rank - 1) / (total - 1);
  const hue = 40 + 190 * t;
  return `hsl(${Math.round(hue)}, 85%, 55%)`;
}

function rejectedIdsThrough(snapshot: SessionSnapshot, upToTurn: number): number[] {
  const ids: number[] = [];
  for (const record of snapshot.transcript.turns) {
    if (record.turn > upToTurn) break;
    if (record.feedback?.kind === 'negative' && record.feedback.region_id !== undefined) {
      ids.push(record.feedback.region_id);
    }
  }
  return ids;
}

function positivesThrough(snapshot: SessionSnapshot, upToTurn: number): number {
  let count = 1; // the initial prompt exemplar
  for (const record of snapshot.transcript.turns) {
    if (record.turn > upToTurn) break;
    if (record.feedback?.kind === 'positive-refinement') count += 1;
  }
  return count;
}

export function currentRanking(snapshot: SessionSnapshot): ScoredRegion[] {
  const turns = snapshot.transcript.turns;
  return turns[turns.length - 1]?.ranking ?? [];
}

export function buildSessionView(
  bundle: BundleInfo,
  snapshot: SessionSnapshot,
  topK = 8,
): SessionView {
  const turns = snapshot.transcript.turns;
  if (turns.length === 0) throw new Error('transcript has no turn records');
  const last = turns[turns.length - 1];
  const status = snapshot.session.status;
  const rejected = new Set(rejectedIdsThrough(snapshot, last.turn));

  const bStar =
    snapshot.transcript.confirmed_region_id !== undefined &&
    snapshot.transcript.b_star !== undefined
      ? { regionId: snapshot.transcript.confirmed_region_id, bbox: snapshot.transcript.b_star }
      : null;

  const boxes = new Map(bundle.regions.map((r) => [r.id, r.bbox]));
  const presented = new Set(last.presented);
  const total = last.ranking.length;

  const overlays: OverlayBox[] = last.ranking.map((sr, index) => {
    const bbox = boxes.get(sr.region_id);
    if (!bbox) throw new Error(`region ${sr.region_id} missing from bundle`);
    return {
      regionId: sr.region_id,
      bbox,
      rank: index + 1,
      color: rankColor(index + 1, total),
      presented: presented.has(sr.region_id),
      rejected: rejected.has(sr.region_id),
      isBStar: bStar?.regionId === sr.region_id,
    };
  });

  const sidebar: SidebarEntry[] = last.ranking.slice(0, topK).map((sr, index) => ({
    regionId: sr.region_id,
    rank: index + 1,
    score: sr.score,
    rejected: rejected.has(sr.region_id),
    presented: presented.has(sr.region_id),
  }));

  const history: TurnSummary[] = turns.map((record) => ({
    turn: record.turn,
    zPosSize: positivesThrough(snapshot, record.turn - 1),
    zNegSize: rejectedIdsThrough(snapshot, record.turn - 1).length,
    rejectedIds: rejectedIdsThrough(snapshot, record.turn - 1),
    feedback: record.feedback?.kind ?? null,
  }));

  const sparklines = new Map<number, number[]>();
  for (const record of turns) {
    for (const sr of record.ranking) {
      const series = sparklines.get(sr.region_id) ?? [];
      series.push(sr.score);
      sparklines.set(sr.region_id, series);
    }
  }

  return {
    status,
    turn: snapshot.session.turn,
    controlsEnabled: status === 'active',
    overlays,
    sidebar,
    history,
    sparklines,
    bStar,
  };
}

// The replay check behind the stateless-UI invariant: the per-turn rankings a
// fresh page would display, straight from the transcript.
export function displayedRankingsFromTranscript(snapshot: SessionSnapshot): number[][] {
  return snapshot.transcript.turns.map((record) => record.ranking.map((sr) => sr.region_id));
}
