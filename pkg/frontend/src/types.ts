// Wire types for the manager's JSON API, mirroring its serializers verbatim.

export interface Identity {
  user: string;
  admin: boolean;
}

export interface ResourceSnapshot {
  cpu_pct: number;
  ram_pct: number;
  gpu_ram_pct: number;
  interactive_user_present: boolean;
  taken_at: number;
}

export interface ClientView {
  client_id: number;
  address: string;
  room_id: number | null;
  has_gpu: boolean;
  cores: number;
  ram_mb: number;
  availability: string;
  accepting_new: boolean;
  snapshot: ResourceSnapshot;
  active_runs: number;
  max_concurrent_runs: number;
  last_seen: number;
}

export interface RoomView {
  room_id: number;
  name: string;
  owner_user: string;
  visibility: string;
  member_users: string[];
  client_ids: number[];
}

export interface DomainView {
  domain_id: number;
  name: string;
  origin: string;
  approved: boolean;
  owner_user: string;
  content_hash: string;
}

export interface ProcessView {
  process_id: number;
  name: string;
  owner_user: string;
  entry_command: string;
  payload_kind: string;
  payload_filename: string;
  payload_size: number;
}

export interface FileView {
  file_id: number;
  name: string;
  size_bytes: number;
  content_hash: string;
  owner_user: string;
}

export interface RunView {
  run_id: number;
  request_id: number;
  rank: number;
  client_id: number | null;
  status: number;
  obs: string;
  attempt: number;
  dispatched_at: number | null;
  started_at: number | null;
  finished_at: number | null;
  has_bundle: boolean;
  progress_pct: number | null;
  progress_message: string;
}

export interface RequestSummary {
  request_id: number;
  user: string;
  repetitions: number;
  parallel: boolean;
  status: string;
  created_at: number;
  progress: number;
}

export interface RequestDetail extends RequestSummary {
  domain_id: number;
  process_id: number;
  parameters: string[];
  needs_gpu: boolean;
  same_machine: boolean;
  shared_file_ids: number[];
  room_ids: number[];
  runs: RunView[];
}

export interface SubmitSpec {
  domain_id: number;
  process_id: number;
  repetitions: number;
  parameters: string[];
  shared_file_ids: number[];
  room_ids: number[];
  parallel: boolean;
  needs_gpu: boolean;
  same_machine: boolean;
}
