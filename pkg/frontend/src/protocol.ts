// Wire schemas for the dashboard WebSocket protocol.
// Mirrors docs/protocol.md exactly; the backend test suite pins the same
// fixtures, so a drift on either side fails a contract test.

import { z } from "zod";

const uint = z.number().int().nonnegative();

export const activityTypeSchema = z.enum([
  "Processing",
  "Spinning",
  "Waiting",
  "Busy",
  "DataMessage",
  "ControlMessage",
]);
export type ActivityType = z.infer<typeof activityTypeSchema>;

export const REMOTE_TYPES: ReadonlySet<ActivityType> = new Set([
  "DataMessage",
  "ControlMessage",
]);

export const nodeSchema = z.strictObject({
  w: uint,
  epoch: uint,
  nanos: uint,
});
export type PagNode = z.infer<typeof nodeSchema>;

export const edgeSchema = z.strictObject({
  src: nodeSchema,
  dst: nodeSchema,
  type: activityTypeSchema,
  op: uint.nullable(),
  rc: uint,
});
export type PagEdge = z.infer<typeof edgeSchema>;

export const metricsRowSchema = z.strictObject({
  from_worker: uint,
  to_worker: uint,
  activity_type: activityTypeSchema,
  count: uint,
  total_duration_ns: uint,
  total_records: uint,
});
export type MetricsRow = z.infer<typeof metricsRowSchema>;

export const hopEdgeSchema = z.strictObject({
  hop: z.number().int().min(1),
  edge: edgeSchema,
});
export type HopEdge = z.infer<typeof hopEdgeSchema>;

export const hopSummarySchema = z.strictObject({
  hop: z.number().int().min(1),
  activity_type: activityTypeSchema,
  count: uint,
  total_duration_ns: uint,
});
export type HopSummary = z.infer<typeof hopSummarySchema>;

export const recordMetricsSchema = z.strictObject({
  worker: uint,
  carried: uint,
  processed: uint,
});
export type RecordMetrics = z.infer<typeof recordMetricsSchema>;

export const epochDataAvailableSchema = z.strictObject({
  type: z.literal("epoch_data"),
  epoch: uint,
  available: z.literal(true),
  pag: z.array(edgeSchema),
  metrics: z.array(metricsRowSchema),
  khops: z.strictObject({
    edges: z.array(hopEdgeSchema),
    summary: z.array(hopSummarySchema),
  }),
  records: z.array(recordMetricsSchema),
});
export type EpochData = z.infer<typeof epochDataAvailableSchema>;

export const epochDataUnavailableSchema = z.strictObject({
  type: z.literal("epoch_data"),
  epoch: uint,
  available: z.literal(false),
  latest: uint.nullable(),
});
export type EpochUnavailable = z.infer<typeof epochDataUnavailableSchema>;

export const violationSchema = z.strictObject({
  type: z.literal("invariant_violation"),
  rule: z.enum([
    "EpochMax",
    "MessageMax",
    "OperatorMax",
    "ProgressMax",
    "ProgressAbsent",
  ]),
  epoch: uint,
  duration_ns: uint,
  worker: uint,
  edge: nodeSchema,
  operator: uint.nullable(),
  activity_type: activityTypeSchema.nullable(),
});
export type Violation = z.infer<typeof violationSchema>;

export const errorFrameSchema = z.strictObject({
  type: z.literal("error"),
  reason: z.string(),
});

export const serverFrameSchema = z.union([
  epochDataAvailableSchema,
  epochDataUnavailableSchema,
  violationSchema,
  errorFrameSchema,
]);
export type ServerFrame = z.infer<typeof serverFrameSchema>;

export const getEpochSchema = z.strictObject({
  type: z.literal("get_epoch"),
  epoch: uint,
});

export function encodeGetEpoch(epoch: number): string {
  return JSON.stringify(getEpochSchema.parse({ type: "get_epoch", epoch }));
}

export function parseServerFrame(text: string): ServerFrame {
  return serverFrameSchema.parse(JSON.parse(text));
}

/** Stable identity of an edge by its source node, as shown in alerts. */
export function nodeKey(node: PagNode): string {
  return `${node.w}@${node.epoch}:${node.nanos}`;
}
